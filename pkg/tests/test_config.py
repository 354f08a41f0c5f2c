import copy

import pytest

from batchscene.config import ConfigError, config_hash, load_config, parse_config, serialize_config
from conftest import CONFIG_DIR

BASE = {
    "schema_version": 1,
    "name": "tiny",
    "assets": {
        "floor": {"geometry": {"primitive": "box", "size": [2, 2, 0.02]}},
        "shelf": {"parts": [
            {"name": "body", "geometry": {"primitive": "box", "size": [0.5, 0.5, 0.5]}},
            {"name": "door", "parent": "body", "geometry": {"primitive": "box", "size": [0.5, 0.02, 0.5]},
             "joint": {"kind": "revolute", "axis": [0, 0, 1], "limits": [0, 1.5]}},
        ]},
        "cup": {"geometry": {"primitive": "cylinder", "radius": 0.03, "height": 0.1}},
    },
    "placements": [
        {"object": "floor", "pose": [0, 0, 0, 0, 0, 0]},
        {"object": "shelf", "parent": "floor", "relationship": {"kind": "on"}},
        {"object": "cup", "parent": "floor",
         "relationship": {"kind": "on", "anchors": ["shelf/door"], "distance_type": "less", "distance": 0.5}},
    ],
}


def variant(**edits):
    doc = copy.deepcopy(BASE)
    for path, value in edits.items():
        target = doc
        keys = path.split("__")
        for k in keys[:-1]:
            target = target[int(k)] if k.isdigit() else target[k]
        last = keys[-1]
        if value is None:
            del target[last]
        else:
            target[int(last) if last.isdigit() else last] = value
    return doc


@pytest.mark.parametrize("name", sorted(p.stem for p in CONFIG_DIR.glob("*.yaml")))
def test_packaged_configs_load(name):
    cfg, base = load_config(CONFIG_DIR / f"{name}.yaml")
    assert cfg.schema_version == 1 and base == CONFIG_DIR
    assert all(p.relationship.kind in ("on", "inside") for p in cfg.placements)


def test_defaults_and_helpers():
    cfg = parse_config(BASE)
    assert cfg.max_retries == 10 and cfg.collision_margin == 0.0
    assert cfg.placement("cup").orientation_rule == "uniform_yaw"
    assert cfg.placement("floor").fixed
    assert cfg.assets["shelf"].part_names("shelf") == ["body", "door"]
    with pytest.raises(KeyError):
        cfg.placement("nothing")


def test_yaml_text_with_bare_on():
    text = serialize_config(parse_config(BASE)).replace("'on'", "on")
    assert "kind: on" in text
    assert parse_config(text).placement("shelf").relationship.kind == "on"


def test_serialize_roundtrip_and_hash():
    cfg = parse_config(BASE)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)
    assert config_hash(parse_config(variant(name="other"))) != config_hash(cfg)


@pytest.mark.parametrize("edits, message", [
    ({"schema_version": 2}, "schema_version"),
    ({"placements__2__relationship__anchors": ["mug"]}, "dependency order"),
    ({"placements__2__relationship__anchors": ["shelf/lid"]}, "no part 'lid'"),
    ({"placements__2__object": "shelf"}, "duplicate object"),
    ({"placements__1__parent": "world"}, "support surface"),
    ({"placements__2__reachability": True}, "robot"),
    ({"placements__2__asset": "plate"}, "unknown asset"),
    ({"placements__1__parent": "cup"}, "dependency order"),
    ({"assets__cup__geometry__radius": -1}, "greater than 0"),
    ({"assets__floor__geometry__size": [1, 0, 1]}, "positive"),
    ({"assets__shelf__parts__1__joint__limits": [1, 0]}, "lo <= hi"),
    ({"assets__shelf__parts__1__joint__axis": [0, 0, 0]}, "non-zero"),
    ({"assets__cup__parts": []}, "exactly one"),
    ({"colour": "red"}, "colour"),
    ({"placements": []}, "at least 1"),
    ({"placements__2__orientation": "face_to"}, "face_to"),
    ({"placements__0__relationship": {"anchors": ["shelf"], "distance_type": "less", "distance": 1}}, "fixed pose"),
])
def test_invalid_configs(edits, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(variant(**edits))


def test_error_messages_carry_field_paths():
    with pytest.raises(ConfigError, match=r"assets\.cup\.geometry"):
        parse_config(variant(assets__cup__geometry__radius=-1))


def test_malformed_documents(tmp_path):
    with pytest.raises(ConfigError, match="mapping"):
        parse_config("- a\n- b\n")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("a: [1, 2\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")


def test_mesh_geometry_is_default_tag():
    cfg = parse_config(variant(assets__cup__geometry={"mesh": "cup.obj", "scale": 0.5}))
    assert cfg.assets["cup"].geometry.mesh == "cup.obj"

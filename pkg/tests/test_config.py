import numpy as np
import pytest

from scenecast.config import parse_config
from scenecast.errors import ConfigError, DataError
from scenecast.simulator import load_scene, scene_from_config, scene_to_config

VALID = """\
# demo
[scene]
width = 64
height = 32
fx = 40
frames = 4

[camera]
velocity = 0 0 1

[box car_1]
label = car
center = 2 -0.8 10
size = 2 1.6 4
"""


class TestParser:
    def test_sections_and_lines(self):
        secs = parse_config(VALID)
        assert [s.kind for s in secs] == ["scene", "camera", "box"]
        assert secs[2].name == "car_1"
        assert secs[0].entries["fx"] == ("40", 5)

    def test_key_outside_section(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("width = 3\n")
        assert exc.value.line == 1

    def test_duplicate_key(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[scene]\nfx = 1\nfx = 2\n")
        assert exc.value.line == 3 and exc.value.key == "fx"

    def test_malformed_lines(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[scene\n")
        assert exc.value.line == 1
        with pytest.raises(ConfigError) as exc:
            parse_config("[scene]\n\njust words\n")
        assert exc.value.line == 3

    def test_config_error_is_data_error(self):
        assert issubclass(ConfigError, DataError)


class TestSceneConfig:
    def test_valid_scene(self):
        spec = scene_from_config(VALID)
        assert spec.intrinsics.width == 64 and spec.intrinsics.cx == 31.5
        assert spec.frames == 4 and len(spec.boxes) == 1
        np.testing.assert_array_equal(spec.camera_twist.v, [0, 0, 1])

    def test_unknown_key_names_line_and_key(self):
        text = VALID.replace("frames = 4", "framez = 4")
        with pytest.raises(ConfigError) as exc:
            scene_from_config(text)
        assert exc.value.line == 6 and exc.value.key == "framez"
        assert "line 6" in str(exc.value) and "framez" in str(exc.value)

    def test_bad_value_names_line(self):
        text = VALID.replace("size = 2 1.6 4", "size = 2 1.6")
        with pytest.raises(ConfigError) as exc:
            scene_from_config(text)
        assert exc.value.line == 14 and exc.value.key == "size"

    def test_missing_required_key(self):
        with pytest.raises(ConfigError) as exc:
            scene_from_config(VALID.replace("fx = 40\n", ""))
        assert exc.value.key == "fx"

    def test_invalid_box_reports_section_line(self):
        with pytest.raises(ConfigError) as exc:
            scene_from_config(VALID.replace("label = car", "label = spaceship"))
        assert exc.value.line == 11

    def test_seed_override(self):
        assert scene_from_config(VALID, seed=9).seed == 9

    def test_round_trip(self):
        spec = scene_from_config(VALID)
        again = scene_from_config(scene_to_config(spec))
        assert scene_to_config(again) == scene_to_config(spec)

    @pytest.mark.parametrize("name", ["static", "dynamic", "moving_box"])
    def test_shipped_configs_load(self, name):
        from pathlib import Path
        path = Path(__file__).resolve().parents[1] / "configs" / f"{name}.cfg"
        spec = load_scene(path)
        assert scene_to_config(spec) == path.read_text()

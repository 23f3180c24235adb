import pytest

from redysim.config import ConfigError, calibration_patch, load_config
from redysim.quant import ValueRange
from redysim.redy import PrecisionThresholds


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config()
    assert (cfg.xbar.rows, cfg.xbar.cols, cfg.xbar.cell_bits, cfg.xbar.adc_bits) == (128, 128, 2, 5)
    assert cfg.xbar.adcs_per_xbar == 16 and cfg.xbar.slices == 4
    assert cfg.energy.clock_hz == 400e6
    assert cfg.energy.redy_area_um2 == 768.8 and cfg.energy.redy_latency == 2.19e-9
    assert cfg.energy.redy_static_power == 9.3e-6 and cfg.energy.redy_dynamic_power == 62.9e-6
    assert cfg.redy.bins == 8 and cfg.redy.subsample_ratio == 0.1
    assert cfg.redy.thresholds.p == (1.40, 1.10, 0.80, 0.55, 0.35)
    assert cfg.policy == "redy" and cfg.seed == 0 and cfg.threads == 1 and not cfg.ranges


def test_layering_and_calibration(tmp_path):
    a = write(tmp_path, "[redy]\nbins = 16\nthresholds = 1.8, 1.5, 1.0, 0.5, 0.2\n", "a.ini")
    b = write(tmp_path, "[run]\nseed = 42\n[calibration]\nlayer.0 = 0.0, 1.5\n", "b.ini")
    cfg = load_config([a, b])
    assert cfg.redy.bins == 16 and cfg.seed == 42
    assert cfg.ranges == {0: ValueRange(0.0, 1.5)}


@pytest.mark.parametrize("text", [
    "[accelerator]\nrowz = 4\n",
    "[extra]\nx = 1\n",
    "[redy]\nbins = many\n",
    "[accelerator]\ncell_bits = 3\n",
    "[redy]\nthresholds = 1.0, 2.0, 0.5, 0.4, 0.3\n",
    "[redy]\nthresholds = 1.9, 1.0, 0.5, 0.4, 0.3\n",
    "[redy]\nhistogram_mode = fuzzy\n",
    "[run]\npolicy = best\n",
    "[run]\nthreads = 0\n",
    "[calibration]\nlayer.x = 0, 1\n",
    "[calibration]\nlayer.0 = 1, 0\n",
    "[calibration]\nlayer.0 = 1\n",
    "[accelerator]\ne_adc_conversion = -1\n",
    "not an ini file",
])
def test_invalid(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config([write(tmp_path, text)])


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config([tmp_path / "nope.ini"])


def test_overrides():
    cfg = load_config().with_overrides(seed=5, threads=None, histogram_mode="exponent", policy="random")
    assert cfg.seed == 5 and cfg.threads == 1 and cfg.redy.mode == "exponent" and cfg.policy == "random"
    with pytest.raises(ConfigError):
        load_config().with_overrides(histogram_mode="nope")


def test_calibration_patch_roundtrip(tmp_path):
    ranges = {0: ValueRange(0.1, 0.9), 3: ValueRange(0.0, 2.5)}
    t = PrecisionThresholds((1.6, 1.2, 0.9, 0.3, 0.1))
    p = tmp_path / "cal.ini"
    with open(p, "w") as fh:
        calibration_patch(ranges, t).write(fh)
    cfg = load_config([p])
    assert cfg.ranges == ranges and cfg.redy.thresholds == t

import json

import numpy as np
import pytest

from ossimm.config import DEFAULTS, ConfigError, RunConfig


def test_defaults_build_every_view():
    cfg = RunConfig.from_dict({})
    assert cfg.sequence().n_c == 10
    assert cfg.phantom_spec().ny == 40
    assert cfg.n_coils == 4 and cfg.n_frames is None
    grid = cfg.dictionary_grid()
    assert grid.r2star_values_hz.size == 261
    assert cfg.cauchy == (3637, 199.98)
    assert cfg.ossimm().n_outer == 4 and cfg.ossimm().n_cg == 2
    assert cfg.lowrank().n_pogm == 15
    assert cfg.analysis().corr_threshold == 0.45
    assert cfg.study().tsnr_db == 38.0


def test_partial_override_merges():
    cfg = RunConfig.from_dict({"recon": {"ossimm": {"n_outer": 6}}})
    assert cfg.ossimm().n_outer == 6
    assert cfg.ossimm().n_cg == 2
    assert cfg["recon"]["lr"] == DEFAULTS["recon"]["lr"]


@pytest.mark.parametrize("doc,where", [
    ({"bogus": 1}, "<root>"),
    ({"recon": {"ossimm": {"extra": 1}}}, "recon/ossimm"),
    ({"sequence": {"tr_s": -1}}, "sequence/tr_s"),
    ({"recon": {"methods": ["nope"]}}, "recon/methods/0"),
    ({"sampling": {"kind": "radial"}}, "sampling/kind"),
])
def test_schema_errors_name_the_path(doc, where):
    with pytest.raises(ConfigError, match=where):
        RunConfig.from_dict(doc)


def test_semantic_errors_become_config_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"sequence": {"te_s": 0.5}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"recon": {"ossimm": {"kappa": 0.5}}})


def test_load_missing_and_bad_json(tmp_path):
    missing = tmp_path / "absent.json"
    with pytest.raises(ConfigError, match=str(missing)):
        RunConfig.load(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        RunConfig.load(bad)


def test_output_dir_relative_to_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"output_dir": "runs/a"}))
    assert RunConfig.load(p).output_dir == tmp_path / "runs" / "a"
    p.write_text(json.dumps({"output_dir": "/abs/x"}))
    assert str(RunConfig.load(p).output_dir) == "/abs/x"


def test_dictionary_options():
    cfg = RunConfig.from_dict({"dictionary": {"t2_range_ms": [40, 150, 1], "f0_window_hz": None,
                                              "reference_t2_ms": 92.6}})
    g = cfg.dictionary_grid()
    assert g.t2_values_s.size == 111
    assert g.f0_values_hz.size == 303
    np.testing.assert_allclose(g.t2p_values(0.04), g.t2p_values(0.15))


def test_to_json_round_trip():
    cfg = RunConfig.from_dict({"seeds": {"noise": 3}})
    again = RunConfig.from_dict(json.loads(cfg.to_json()))
    assert again.data == cfg.data

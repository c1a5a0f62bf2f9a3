import json

from boltzgap.cli import load_config, main, validate_config

TINY = {
    "kernel": {"dimension": 2, "gamma": 1.0, "c_phi": 1.0, "angular": "hard_sphere"},
    "grid": {"points_per_axis": 21, "extent": 5.0},
    "sphere": {"n_azimuth": 32},
    "weight": {"a": 0.5, "s_factor": 0.4},
    "solver": {
        "t_end": 5.0,
        "quad_azimuth": 8,
        "epsilon": 0.05,
        "boundary_mass_tol": 1e-6,
    },
    "experiment": {
        "delta_ladder": [0.4, 0.2],
        "p_values": [5, 10],
        "povzner_s": 0.4,
        "n_samples": 500,
        "weight_pairs": [[0.5, 0.4], [0.8, 0.7]],
        "resolvent_points": 48,
    },
    "seed": 1,
}


def _write_cfg(tmp_path, patch=None):
    cfg = json.loads(json.dumps(TINY))
    if patch:
        for k, v in patch.items():
            if v is None:
                cfg.pop(k, None)
            else:
                cfg[k] = v
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_validate_catches_missing_gamma():
    cfg = json.loads(json.dumps(TINY))
    del cfg["kernel"]["gamma"]
    errors = validate_config(cfg)
    assert any(e.startswith("kernel.gamma") for e in errors)


def test_validate_rejects_maxwell_and_soft():
    for gamma in (0.0, -0.5):
        cfg = json.loads(json.dumps(TINY))
        cfg["kernel"]["gamma"] = gamma
        errors = validate_config(cfg)
        assert any("kernel.gamma" in e for e in errors)


def test_maxwell_preset_is_rejected(tmp_path):
    rc = main(["gapcheck", "--config", "preset:maxwell_rejected", "--out", str(tmp_path)])
    assert rc == 2


def test_missing_gamma_exit_code(tmp_path, capsys):
    cfg = json.loads(json.dumps(TINY))
    del cfg["kernel"]["gamma"]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(cfg))
    rc = main(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "kernel.gamma" in capsys.readouterr().err


def test_presets_are_valid():
    for name in ("hard_sphere_n3", "hard_potential_gamma_half_n2"):
        assert validate_config(load_config(f"preset:{name}")) == []


def test_spectrum_and_determinism(tmp_path):
    p = _write_cfg(tmp_path)
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["spectrum", "--config", str(p), "--out", str(out1)]) == 0
    assert main(["spectrum", "--config", str(p), "--out", str(out2)]) == 0
    s1 = (out1 / "spectrum" / "summary.json").read_bytes()
    s2 = (out2 / "spectrum" / "summary.json").read_bytes()
    assert s1 == s2
    assert (out1 / "spectrum" / "eigenvalues.csv").exists()
    assert (out1 / "spectrum" / "eigenvalue_ladder.svg").exists()


def test_gapcheck_artifacts(tmp_path):
    p = _write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["gapcheck", "--config", str(p), "--out", str(out)]) == 0
    summary = json.loads((out / "gapcheck" / "summary.json").read_text())
    assert summary["pass"]
    assert summary["gap"] > 0
    diag = json.loads((out / "gapcheck" / "collision_diagnostics.json").read_text())
    for key in ("conservation_defects", "nu0", "n0", "n1", "entropy_production"):
        assert key in diag


def test_evolve_run(tmp_path):
    p = _write_cfg(tmp_path)
    out = tmp_path / "o"
    rc = main(["evolve", "--config", str(p), "--out", str(out)])
    summary = json.loads((out / "evolve" / "summary.json").read_text())
    assert rc == 0, summary
    assert summary["rate_gap_rel_err"] <= 0.10
    assert (out / "evolve" / "trajectory.csv").exists()
    assert (out / "evolve" / "decay.svg").exists()
    header = (out / "evolve" / "trajectory.csv").read_text().splitlines()[0]
    assert header.split(",") == [
        "t", "l1_dist", "l1_m_dist", "l1_m2_dist", "H", "D", "mass", "energy", "exp_moment",
    ]


def test_moments_run(tmp_path):
    p = _write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["moments", "--config", str(p), "--out", str(out)]) == 0
    assert (out / "moments" / "povzner.csv").exists()


def test_transfer_run(tmp_path):
    p = _write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["transfer", "--config", str(p), "--out", str(out)]) == 0
    summary = json.loads((out / "transfer" / "summary.json").read_text())
    assert summary["gap_agreement_between_scalings"]


def test_resolvent_run(tmp_path):
    p = _write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["resolvent", "--config", str(p), "--out", str(out)]) == 0
    summary = json.loads((out / "resolvent" / "summary.json").read_text())
    assert summary["checks"]["identity_within_5pct"]
    assert (out / "resolvent" / "resolvent.csv").exists()

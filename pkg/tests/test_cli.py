import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from niche.artifacts import read_snapshot_csv
from niche.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from niche.config import ConfigError, parse_config, serialize

SIM = {
    "subcommand": "simulate",
    "domain": {"shape": "interval", "a": 0, "b": 1},
    "params": {"s": 0.5, "p": 0.5, "h": 0.01},
    "N": 20000,
    "T": 0.05,
    "snapshots": [0.0, 0.05],
    "initial": {"law": "point", "x0": 0.5},
    "grid": {"dx": 0.0625},
    "seed": 3,
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run_cli(tmp_path, doc, out, *extra):
    return main(["--config", write(tmp_path, doc), "--out", str(tmp_path / out), "--quiet", *extra])


# ---------------------------------------------------------------- config


def test_parse_defaults():
    cfg = parse_config(json.dumps(SIM))
    assert cfg.params.tau == pytest.approx(0.01) and cfg.snapshot_times == [0.0, 0.05]
    v = parse_config('{"subcommand": "validate"}')
    assert (v.s, v.p, v.h, v.dx) == (0.25, 0.2, 0.01, 1 / 128)


@pytest.mark.parametrize(
    "patch",
    [
        {"domian": {}},
        {"params": {"s": 1.5, "p": 0.5, "h": 0.01}},
        {"N": 0},
        {"N": 1.5},
        {"T": -1},
        {"snapshots": [0.2]},
        {"initial": {"law": "point", "x0": 2.0}},
        {"initial": {"law": "cosine"}},
        {"grid": {"dx": 0}},
        {"seed": 2**64},
        {"alpha_override": 1.0},
        {"domain": {"shape": "triangle"}},
    ],
)
def test_config_errors(patch):
    with pytest.raises(ConfigError):
        parse_config({**SIM, **patch})


def test_malformed_and_missing():
    with pytest.raises(ConfigError):
        parse_config("{not json")
    with pytest.raises(ConfigError):
        parse_config({"subcommand": "solve"})
    doc = {k: v for k, v in SIM.items() if k not in ("N", "snapshots")}
    doc["subcommand"] = "solve"
    assert parse_config({**doc, "beta_override": 0.0}).beta_override == 0.0


domains = st.one_of(
    st.tuples(st.floats(-5, 5), st.floats(0.1, 5)).map(lambda t: {"shape": "interval", "a": t[0], "b": t[0] + t[1]}),
    st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3), st.floats(0.1, 3)).map(
        lambda t: {"shape": "rectangle", "lo": [t[0], t[1]], "hi": [t[0] + t[2], t[1] + t[3]]}),
    st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3)).map(
        lambda t: {"shape": "disk", "center": [t[0], t[1]], "radius": t[2]}),
)


@settings(max_examples=60, deadline=None)
@given(
    dom=domains,
    s=st.floats(0.01, 0.99),
    p=st.floats(0, 1),
    h=st.floats(1e-4, 0.5),
    N=st.integers(1, 10**7),
    T=st.floats(0, 10),
    seed=st.integers(0, 2**64 - 1),
    law=st.sampled_from(["uniform", "tabulated"]),
    dx=st.floats(1e-4, 0.5),
)
def test_round_trip(dom, s, p, h, N, T, seed, law, dx):
    initial = {"law": law} if law == "uniform" else {"law": law, "path": "init.csv"}
    doc = {"subcommand": "simulate", "domain": dom, "params": {"s": s, "p": p, "h": h}, "N": N, "T": T,
           "initial": initial, "grid": {"dx": dx}, "seed": seed}
    cfg = parse_config(doc)
    assert parse_config(serialize(cfg)) == cfg


# ---------------------------------------------------------------- command line


def test_simulate_writes_histograms(tmp_path):
    assert run_cli(tmp_path, SIM, "a") == EXIT_OK
    t0 = read_snapshot_csv(str(tmp_path / "a" / "hist_step_000000.csv"))
    assert t0.counts.sum() == 20000 and t0.counts[8] == 20000  # x0 = 0.5 sits in [0.5, 0.5625)
    last = read_snapshot_csv(str(tmp_path / "a" / "hist_step_000005.csv"))
    assert last.meta["step"] == 5 and last.meta["N"] == 20000
    assert np.sum(last.density * 0.0625) == pytest.approx(1.0)
    assert json.loads((tmp_path / "a" / "config.json").read_text())["seed"] == 3


def test_output_independent_of_workers(tmp_path):
    doc = {**SIM, "N": 300_000}
    assert run_cli(tmp_path, doc, "w1", "--workers", "1") == EXIT_OK
    assert run_cli(tmp_path, doc, "w3", "--workers", "3") == EXIT_OK
    for name in sorted(os.listdir(tmp_path / "w1")):
        if name != "config.json":
            assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes(), name


def test_seed_override_changes_stream(tmp_path):
    run_cli(tmp_path, SIM, "s3")
    run_cli(tmp_path, SIM, "s4", "--seed", "4")
    f = "hist_step_000005.csv"
    assert (tmp_path / "s3" / f).read_bytes() != (tmp_path / "s4" / f).read_bytes()


def test_solve_and_compare_from_files(tmp_path):
    solve = {k: v for k, v in SIM.items() if k not in ("N", "seed")}
    solve["subcommand"] = "solve"
    assert run_cli(tmp_path, solve, "pde") == EXIT_OK
    fields = sorted(f for f in os.listdir(tmp_path / "pde") if f.startswith("field_step") and f.endswith(".csv"))
    assert len(fields) == 2
    tab = read_snapshot_csv(str(tmp_path / "pde" / fields[-1]))
    assert tab.counts is None and tab.meta["mass"] == pytest.approx(1.0, rel=1e-10)
    run_cli(tmp_path, SIM, "sim")
    cmp_doc = {"subcommand": "compare", "inputs": {"histogram": str(tmp_path / "sim" / "hist_step_000005.csv"),
                                                   "field": str(tmp_path / "pde" / fields[-1])}}
    assert run_cli(tmp_path, cmp_doc, "cmp") == EXIT_OK
    l1 = json.loads((tmp_path / "cmp" / "compare.json").read_text())["l1"]
    assert 0 <= l1 < 0.2


def test_compare_rejects_grid_mismatch(tmp_path):
    run_cli(tmp_path, SIM, "a")
    run_cli(tmp_path, {**SIM, "grid": {"dx": 0.125}}, "b")
    doc = {"subcommand": "compare", "inputs": {"histogram": str(tmp_path / "a" / "hist_step_000005.csv"),
                                               "field": str(tmp_path / "b" / "hist_step_000005.csv")}}
    assert run_cli(tmp_path, doc, "c") == EXIT_RUNTIME


def test_phantom_and_constants(tmp_path):
    ph = {k: v for k, v in SIM.items() if k not in ("N", "seed", "snapshots")}
    ph.update(subcommand="phantom", grid={"dx": 1 / 64})
    assert run_cli(tmp_path, ph, "ph") == EXIT_OK
    meta = json.loads((tmp_path / "ph" / "phantom_step_000005.json").read_text())
    assert meta["extension_residual_max"] < 1e-6
    assert run_cli(tmp_path, {"subcommand": "constants", "samples": 100_000}, "k") == EXIT_OK
    out = json.loads((tmp_path / "k" / "constants.json").read_text())
    assert out["halfspace"]["1"]["c_star"] == 0.75


def test_config_error_exit_codes(tmp_path, capsys):
    assert run_cli(tmp_path, {"subcommand": "solve", "domian": {}}, "x") == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert run_cli(tmp_path, SIM, "y", "--workers", "0") == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err

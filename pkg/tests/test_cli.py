import json

from dynaperc import cli


def run(args):
    return cli.main(args)


def test_lab_counterexample(tmp_path):
    out = tmp_path / "o"
    assert run(["lab", "--scenario", "counterexample", "--seed", "3",
                "--out", str(out)]) == 0
    text = (out / "lab.csv").read_text()
    assert "counterexample_annealed_tv,0.0" in text
    assert "counterexample_quenched_tv,0.5" in text


def test_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["lab", "--scenario", "counterexample", "--seed", "9",
                    "--out", str(out)]) == 0
    assert (a / "lab.csv").read_bytes() == (b / "lab.csv").read_bytes()


def test_env_sim_and_manifest(tmp_path):
    out = tmp_path / "o"
    assert run(["env-sim", "--seed", "1", "--out", str(out)]) == 0
    assert (out / "env.bin").exists()
    lines = (out / "manifest.jsonl").read_text().splitlines()
    rec = json.loads(lines[-1])
    assert rec["status"] == "ok"
    assert len(rec["config_hash"]) == 16
    assert "env_sim.csv" in rec["outputs"]


def test_walk_sim(tmp_path):
    out = tmp_path / "o"
    assert run(["walk-sim", "--seed", "2", "--out", str(out)]) == 0
    dump = (out / "walk.txt").read_text()
    assert dump.startswith("# dynaperc-walk-v1")


def test_bound_with_config(tmp_path):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[run]\nd = 1\nn = 8\nmu = 0.25\neps = 0.25\n")
    out = tmp_path / "o"
    assert run(["bound", "--config", str(cfg), "--out", str(out)]) == 0
    assert "integral_bound_steps" in (out / "bound.csv").read_text()


def test_bound_from_profile_file(tmp_path):
    from dynaperc.expansion import profile_from_values
    prof = profile_from_values([0.125, 0.5], [0.5, 0.25], "exact-enumerated", 0.125)
    pfile = tmp_path / "profile.txt"
    pfile.write_text(prof.serialize())
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(f"[run]\nprofile = {pfile}\n")
    out = tmp_path / "o"
    assert run(["bound", "--config", str(cfg), "--out", str(out)]) == 0


def test_missing_config_errors(tmp_path):
    assert run(["mix", "--config", str(tmp_path / "absent.ini"),
                "--out", str(tmp_path / "o")]) == 2


def test_unknown_scenario_errors(tmp_path):
    assert run(["lab", "--scenario", "nope", "--out", str(tmp_path / "o")]) == 2


def test_budget_censors_cells(tmp_path):
    out = tmp_path / "o"
    # zero budget: every cell is censored, but the run completes cleanly
    assert run(["mix", "--budget", "0", "--seed", "1", "--out", str(out)]) == 0
    recs = [json.loads(ln) for ln in (out / "manifest.jsonl").read_text().splitlines()]
    assert all(r["status"] == "censored" for r in recs)


def test_lab_theorem_scenario(tmp_path):
    out = tmp_path / "o"
    assert run(["lab", "--scenario", "theorem", "--out", str(out)]) == 0
    assert "theorem_tail_certificate_ok,1.0" in (out / "lab.csv").read_text()

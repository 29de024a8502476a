from cutdg.cli import main
from cutdg.config import serialize_config
from cutdg.experiments import ramp_config


def _write_config(tmp_path, cfg, **overrides):
    for key, value in overrides.items():
        setattr(cfg, key, value)
    path = tmp_path / "run.cfg"
    path.write_text(serialize_config(cfg))
    return str(path)


def test_mesh_info_command(tmp_path, capsys):
    cfg = ramp_config("acoustics", 1, 1e-2, out=str(tmp_path))
    path = _write_config(tmp_path, cfg)
    rc = main(["mesh-info", "--config", path])
    out = capsys.readouterr().out
    assert rc == 0
    assert "cells = " in out
    assert (tmp_path / "mesh.txt").exists()


def test_invalid_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("equation = advection\nnot_a_key = 1\n")
    rc = main(["mesh-info", "--config", str(path)])
    assert rc == 2
    assert "not_a_key" in capsys.readouterr().err


def test_consistency_command(tmp_path, capsys):
    cfg = ramp_config("advection", 1, 1e-5, n_polynomials=3, out=str(tmp_path))
    path = _write_config(tmp_path, cfg)
    rc = main(["consistency", "--config", path])
    out = capsys.readouterr().out
    assert rc == 0
    assert "status = pass" in out
    assert "seed=42" in out


def test_check_axioms_command(tmp_path, capsys):
    cfg = ramp_config("acoustics", 1, 1e-2, n_triples=5, out=str(tmp_path))
    path = _write_config(tmp_path, cfg)
    rc = main(["check-axioms", "--config", path, "--seed", "3"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "balance" in out


def test_stability_command(tmp_path, capsys):
    cfg = ramp_config("acoustics", 1, 1e-6, steps=30, out=str(tmp_path))
    path = _write_config(tmp_path, cfg)
    rc = main(["stability", "--config", path])
    out = capsys.readouterr().out
    assert rc == 0
    assert "growth = " in out


def test_evolve_command_writes_trace(tmp_path, capsys):
    cfg = ramp_config("advection", 1, 1e-2, t_final=0.05,
                      initial="bump-advect:0.55,0.55,0.15", out=str(tmp_path))
    path = _write_config(tmp_path, cfg)
    rc = main(["evolve", "--config", path])
    assert rc == 0
    trace = (tmp_path / "evolve_trace.csv").read_text()
    assert trace.splitlines()[0] == "step,t,l2,mass"


def test_convergence_command_deterministic(tmp_path):
    from cutdg.config import RunConfig
    from cutdg.geometry import halfplane_from_line

    hp = halfplane_from_line(0.75, 0.005)
    cfg = RunConfig(
        equation="advection", degree=0, nx=8, ny=8,
        constraints=[(hp.a, hp.b, hp.c)], beta=(1.0, 0.75),
        alpha0=0.25, initial="windowed-sine-advect",
        refinements=(8, 16), projection_only=True, out=str(tmp_path),
    ).validate()
    path = _write_config(tmp_path, cfg)
    rc = main(["convergence", "--config", path])
    assert rc == 0
    first = (tmp_path / "convergence.csv").read_bytes()
    rc = main(["convergence", "--config", path])
    assert rc == 0
    assert (tmp_path / "convergence.csv").read_bytes() == first


def test_threads_flag_accepted(tmp_path, capsys):
    cfg = ramp_config("acoustics", 1, 1e-2, out=str(tmp_path))
    path = _write_config(tmp_path, cfg)
    assert main(["mesh-info", "--config", path, "--threads", "4"]) == 0
    capsys.readouterr()

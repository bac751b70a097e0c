import json

import numpy as np
import pytest

from qmpc.pmpc import MpcConfig
from qmpc.sim import (
    SimConfig,
    SimulationError,
    Trajectory,
    compute_metrics,
    read_trajectory_csv,
    run_closed_loop,
    trajectory_csv,
    write_metrics_json,
    write_trajectory_csv,
)
from qmpc.solve import SaSchedule
from qmpc.verify import benchmark_mpc, benchmark_plant

from conftest import poly_field


def _sim(backend="classical", steps=20, reference=(1.0,), mpc=None, **kw):
    return SimConfig(benchmark_plant(), mpc or benchmark_mpc(), 0.05, steps, (0.0,), [list(reference)],
                     backend=backend, **kw)


def test_equilibrium_stays_at_rest():
    traj = run_closed_loop(_sim(reference=(0.0,), steps=10))
    assert np.abs(traj.u_cmd).max() < 1e-15 and np.abs(traj.x).max() < 1e-15
    ex = run_closed_loop(_sim("exhaustive", reference=(0.0,), steps=10))
    # 0 is not on the 8-bit grid over [-1, 3]; the quantised command stays within one step of it
    assert np.abs(ex.u_cmd).max() <= 4 / 255


def test_one_sample_delay():
    traj = run_closed_loop(_sim(steps=15))
    assert traj.delay_ok()
    np.testing.assert_array_equal(traj.u[0], [0.0])
    np.testing.assert_array_equal(traj.u[1:], traj.u_cmd[:-1])
    np.testing.assert_allclose(traj.t, 0.05 * np.arange(15))


def test_classical_tracks_step():
    traj = run_closed_loop(_sim(steps=100))
    assert abs(1.0 - traj.x[50:, 0]).max() < 0.05


def test_reference_held_past_end():
    cfg = _sim(steps=1)
    cfg = SimConfig(cfg.plant, cfg.mpc, 0.05, 3, (0.0,), [[0.0], [1.0]])
    np.testing.assert_array_equal(cfg.ref(0), [0.0])
    np.testing.assert_array_equal(cfg.ref(7), [1.0])


def test_config_checks():
    with pytest.raises(ValueError):
        _sim(steps=0)
    with pytest.raises(ValueError):
        _sim(T_d=0.1)
    _sim(T_d=0.05)
    bad = MpcConfig(T=3, Q=1.0, P=1.0, R=1.0, n_x=2, n_u=1, c_lo=-1, c_hi=1)
    with pytest.raises(ValueError):
        run_closed_loop(_sim(mpc=bad))


def test_deterministic_sa_runs():
    sched = SaSchedule(sweeps=100, restarts=3)
    a = run_closed_loop(_sim("sa", steps=10, schedule=sched, seed=4, record_timing=False))
    b = run_closed_loop(_sim("sa", steps=10, schedule=sched, seed=4, record_timing=False))
    assert trajectory_csv(a) == trajectory_csv(b)


def test_exhaustive_and_sa_agree_when_sa_is_optimal():
    mpc = MpcConfig(T=4, Q=10.0, P=10.0, R=0.1, n_x=1, n_u=1, c_lo=-1.0, c_hi=3.0, gamma_blocks=(1, 3), n_b=4)
    ex = run_closed_loop(_sim("exhaustive", steps=30, mpc=mpc, record_timing=False))
    sa = run_closed_loop(_sim("sa", steps=30, mpc=mpc, schedule=SaSchedule(sweeps=300, restarts=10),
                              record_timing=False))
    np.testing.assert_array_equal(ex.x, sa.x)
    np.testing.assert_array_equal(ex.u, sa.u)


def test_solver_failure_carries_partial_trajectory():
    mpc = MpcConfig(T=10, Q=1.0, P=1.0, R=0.1, n_x=1, n_u=1, c_lo=-1.0, c_hi=1.0, n_b=3)
    with pytest.raises(SimulationError) as err:
        run_closed_loop(_sim("exhaustive", steps=5, mpc=mpc))
    assert len(err.value.partial) == 0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_plant_divergence_reported():
    dyn = poly_field(1, 1, [(0, (3, 0), 1e3)])
    mpc = MpcConfig(T=2, Q=0.0, P=0.0, R=1.0, n_x=1, n_u=1, c_lo=-1.0, c_hi=1.0)
    cfg = SimConfig(dyn, mpc, 0.5, 20, (10.0,), [[0.0]])
    with pytest.raises(SimulationError) as err:
        run_closed_loop(cfg)
    assert "step" in str(err.value)


def _traj(x, u, r, wall):
    n = len(x)
    mpc = MpcConfig(T=2, Q=2.0, P=1.0, R=0.5, n_x=1, n_u=1, c_lo=-1.0, c_hi=1.0)
    col = lambda v: np.asarray(v, dtype=float).reshape(n, -1)  # noqa: E731
    return Trajectory(np.arange(n) * 0.1, col(x), col(u), col(r), np.zeros(n), np.zeros(n), np.asarray(wall, float),
                      col(u), np.zeros((n, 2)), "classical", mpc)


def test_metrics_zero_trajectory():
    m = compute_metrics(_traj([0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0]))
    assert m["rms_tracking_error"] == 0 and m["total_cost"] == 0 and m["mean_wall_ms"] == 0
    assert m["max_wall_ms"] == 0 and m["saturation_fraction"] == 0 and m["steps"] == 3


def test_metrics_hand_values():
    m = compute_metrics(_traj([0.0, 0.5, 1.0, 2.0], [1.0, -1.0, 0.2, 0.0], [1.0] * 4, [0.001, 0.003, 0.002, 0.002]))
    assert m["rms_tracking_error"] == pytest.approx(np.sqrt((1 + 0.25 + 0 + 1) / 4))
    assert m["total_cost"] == pytest.approx(0.5 * (1 + 1 + 0.04) + 2.0 * (1 + 0.25 + 0 + 1))
    assert m["mean_wall_ms"] == pytest.approx(2.0)
    assert m["max_wall_ms"] == pytest.approx(3.0)
    assert m["saturation_fraction"] == pytest.approx(0.5)


def test_metrics_same_keys_across_backends():
    a = compute_metrics(run_closed_loop(_sim(steps=3)))
    b = compute_metrics(run_closed_loop(_sim("exhaustive", steps=3)))
    assert a.keys() == b.keys()


def test_csv_format_and_round_trip(tmp_path):
    traj = run_closed_loop(_sim(steps=5, record_timing=False))
    text = trajectory_csv(traj)
    header = text.splitlines()[0]
    assert header == "t,x_1,u_1,r_1,J,wall_ms,backend"
    p = tmp_path / "traj.csv"
    write_trajectory_csv(traj, p)
    cols = read_trajectory_csv(p)
    np.testing.assert_array_equal([float(v) for v in cols["x_1"]], traj.x[:, 0])
    np.testing.assert_array_equal([float(v) for v in cols["J"]], traj.J)
    assert set(cols["backend"]) == {"classical"}


def test_metrics_json(tmp_path):
    m = compute_metrics(_traj([0, 1], [0, 1], [1, 1], [0.0, 0.0]))
    p = tmp_path / "m.json"
    write_metrics_json(m, p)
    assert json.loads(p.read_text()) == m

"""Smoke test for the jamshield_py extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml --release`,
then run `python python/smoke_test.py` or `pytest python/`.
"""

import math

import jamshield_py as js


def test_closed_forms():
    assert js.path_loss(100.0, True) > js.path_loss(200.0, True) > 0.0
    w = js.steering_vector(1.0, 2.0, 4)
    assert len(w) == 4
    assert abs(sum(abs(c) ** 2 for c in w) - 1.0) < 1e-12
    assert abs(js.array_gain(w, 1.0, 2.0) - 4.0) < 1e-9
    assert abs(js.effective_sinr([2.7] * 5) - 2.7) < 1e-12
    assert 0.0 < js.sinr_to_bler(1.0) < 1.0
    assert abs(js.per_closed_form(0.1, 1) - 0.19) < 1e-12
    assert abs(js.per_closed_form(0.1, 1, "residual") - 0.01) < 1e-12
    assert js.ppo_clip_objective(2.0, 1.0, 0.2) == 1.2
    assert abs(js.prediction_entropy([0.5, 0.5]) - math.log(2.0)) < 1e-12


def test_gae_matches_discounted_return():
    adv, ret = js.compute_gae([1.0, 1.0], [0.0, 0.0], 0.0, 0.5, 1.0)
    assert ret == [1.5, 1.0]
    assert adv == [1.5, 1.0]


def test_errors_map_to_python_exceptions():
    for bad in (lambda: js.path_loss(-1.0), lambda: js.prediction_entropy([0.7, 0.7])):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")


def test_env_episode():
    env = js.Env('[scenario]\nepisode_slots = 12\n', topology_seed=6)
    o1, o2 = env.reset(0)
    assert (len(o1), len(o2)) == env.obs_dims
    o1, o2, r1, r2, done, kpi = env.step([0, 0, 0, 1, 1], [0.0, 0.0, 0.0, 0.0])
    assert set(kpi) >= {"packet_loss", "latency_s", "sinr_eff"}
    assert 0.0 <= kpi["packet_loss"] <= 1.0
    steps = 1
    while not done:
        *_, done, kpi = env.step_random()
        steps += 1
    assert steps == 12
    try:
        js.Env('[trainer]\ngamma = 1.5\n')
    except ValueError as e:
        assert "trainer.gamma" in str(e)
    else:
        raise AssertionError("expected ValueError")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")

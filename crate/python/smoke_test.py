"""Smoke test for the ctrlsense extension module.

Build first, e.g. `pip install --no-build-isolation -e crates/python` with
maturin, or `cargo build --release -p ctrlsense-py --features extension-module`
and copy `target/release/libctrlsense.so` next to this file as `ctrlsense.so`.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import ctrlsense  # noqa: E402


def close(a, b, tol=1e-10):
    return abs(a - b) <= tol


def main():
    dep = ctrlsense.DependenceStructure.paired_five(0.6)
    assert dep.n == 5 and dep.groups == [[0, 1], [2, 3], [4]]
    assert close(sum(dep.pair_joint()), 1.0)
    assert close(dep.state_probability([0] * 5), sum(
        dep.state_probability([(r >> i) & 1 for i in range(5)]) for r in [0]
    ))

    sigma = ctrlsense.update_marginal([0.8] * 5, [(0, 0)], dep, 0.2)
    assert close(sigma[0], 0.64 / 0.68), sigma
    naive = ctrlsense.update_marginal([0.8] * 5, [(0, 0)], dep, 0.2, naive=True)
    assert naive[1:] == [0.8] * 4

    exact = ctrlsense.DependenceStructure.paired_five(1.0)
    pi = ctrlsense.joint_prior(exact)
    sigma = [0.8] * 5
    for obs in [[(0, 1)], [(2, 0), (4, 1)], [(1, 1)]]:
        pi = ctrlsense.update_joint(pi, 5, obs, 0.2)
        sigma = ctrlsense.update_marginal(sigma, obs, exact, 0.2)
    for a, b in zip(ctrlsense.marginalize(pi, 5), sigma):
        assert close(a, b), (a, b)

    assert close(ctrlsense.binary_entropy(0.5), math.log(2))
    assert close(ctrlsense.llr_stat(0.9), 0.8 * math.log(9))

    agent = ctrlsense.train("central_marginal", dep, episodes=30, steps_per_episode=20, seed=3)
    assert agent.episodes_trained == 30 and len(agent.episode_rewards) == 30
    mu = agent.policy([0.8] * 5)
    assert close(sum(mu), 1.0, 1e-9)
    m = agent.evaluate(dep, 0.2, 0.9, episodes=50, seed=1)
    assert 0.0 <= m["accuracy"] <= 1.0 and m["episodes"] == 50

    dec = ctrlsense.train("decentralized", dep, episodes=10, steps_per_episode=10, lam=1.0)
    for topo in ("shared", "local", "joint"):
        r = dec.evaluate(dep, 0.2, 0.9, episodes=10, topology=topo, k_max=50)
        assert r["episodes"] == 10

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "agent.ckpt")
        agent.save(path)
        back = ctrlsense.Agent.load(path)
        assert back.policy([0.7, 0.9, 0.5, 0.8, 0.99]) == agent.policy([0.7, 0.9, 0.5, 0.8, 0.99])
        assert '"episodes_trained": 30' in ctrlsense.inspect_checkpoint(path)

        rows = ctrlsense.sweep(
            f'variant = "central_naive"\noutput = "{tmp}/sweep"\nepisodes = 5\n'
            'steps_per_episode = 10\neval_episodes = 20\nrho = [0.0, 1.0]\nupsilon = [0.8, 0.9]\n'
        )
        assert len(rows) == 4 and os.path.exists(os.path.join(tmp, "sweep", "metrics.csv"))

    try:
        ctrlsense.update_marginal([0.8] * 4, [(0, 0)], dep, 0.2)
    except ValueError:
        pass
    else:
        raise AssertionError("dimension mismatch not raised")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

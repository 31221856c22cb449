"""Learn a cyclic category sequence and replay it without input.

Observations are noisy templates of ten states visited in a cycle, with 10%
random jumps. PredPCA compresses them to ten predicted components, ICA turns
those into one unit per state, and a winner-takes-all loop on the learned
code transition regenerates the cycle.

    python demos/categorical_rollout.py
"""

from predpca import mnist, synth


def main():
    templates = synth.categorical_templates(n_states=10, N_s=40, seed=0)
    train, train_labels = synth.categorical_sequence(templates, 20_000, noise=0.5, seed=1)
    test, test_labels = synth.categorical_sequence(templates, 2_000, noise=0.5, p_replace=0.0,
                                                   seed=2)
    res = mnist.run_pipeline(train, train_labels, test, test_labels, K_p=1, N_u=10, horizon=30,
                             sweep=range(6, 15))
    print("expected test error around the optimum:")
    for n, val in res.L_curve.items():
        print(f"  N_u={n:2d}: {val:.3f}")
    print(f"categorization error on held-out data: {res.categorization_error:.4f}")
    print("component -> state:", res.label_map.tolist())
    print("free-running rollout:", " ".join(map(str, res.rollout)))
    print(f"rollout mistakes: {res.rollout_errors}/{res.rollout_horizon}")


if __name__ == "__main__":
    main()

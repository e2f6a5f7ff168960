"""When do kinks move independently?

Each kink is kicked by the noise paired against its own tangent.  If the
covariance has no weight near a kink, that kink freezes; if a mode covers
several kinks, their increments correlate exactly as the Ito isometry
predicts.  Cosine modes vanish on fixed interior points, which lets mode
clusters address kinks selectively: odd modes vanish at x = 1/2, modes
k = 2 mod 4 vanish at x = 1/4.
"""
import numpy as np

from kinklab.experiments import ExperimentConfig, run_scenario

print("disjoint mode clusters driving kinks at (0.25, 0.5):")
block = ExperimentConfig.from_dict({
    "scenario": "correlations",
    "physics": {"eps": 0.02},
    "noise": {"K": 20, "eta": 1e-3, "modes": [1, 3, 5, 7, 9, 11, 2, 6, 10, 14]},
    "run": {"dt": 1e-3, "replicas": 10, "seed": 3, "n_steps": 1000},
    "initial": {"h": [0.25, 0.5]},
})
rep, _ = run_scenario(block)
print(f"  empirical increment correlation: {rep['max_offdiag_correlation']:.4f}"
      "  (decoupled)")

print("flat spectrum over modes 1..8 driving kinks at (0.3, 0.7):")
coupled = ExperimentConfig.from_dict({
    "scenario": "correlations",
    "physics": {"eps": 0.02},
    "noise": {"K": 8, "eta": 1e-3},
    "run": {"dt": 1e-3, "replicas": 10, "seed": 4, "n_steps": 1000},
    "initial": {"h": [0.3, 0.7]},
})
rep2, _ = run_scenario(coupled)
emp = np.asarray(rep2["empirical_covariance"])
pred = np.asarray(rep2["predicted_covariance"])
z = np.asarray(rep2["z_scores"])
print(f"  empirical cov(dh1, dh2) = {emp[0, 1]:.3e}")
print(f"  predicted (Ito isometry) = {pred[0, 1]:.3e}")
print(f"  largest |z| against prediction: {np.max(np.abs(z)):.2f} (within noise)")

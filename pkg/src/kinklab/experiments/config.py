"""Experiment configuration: strict parsing, defaults, invariant enforcement.

The config file is a JSON tree with sections ``scenario``, ``physics``,
``noise``, ``run``, ``initial`` and (for the spectrum scenario)
``spectrum``.  Unknown keys are rejected by name, missing keys fall back to
the documented defaults below, and the stability scenarios enforce the noise
caps eta <= eps^(1+2m) (plain) and eta <= eps^(4+2m) (mass conserving)
before anything runs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
import numpy as np

from ..errors import ConfigError
from ..noise import NoiseModel, build_noise, mode_cluster_alphas

SCENARIOS = (
    "compare",
    "stability_ac_l2",
    "stability_ac_l4",
    "stability_mac_l2",
    "stability_mac_l4",
    "spectrum",
    "correlations",
    "conjecture_mac",
)

STABILITY_SCENARIOS = tuple(s for s in SCENARIOS if s.startswith("stability"))
MAC_SCENARIOS = ("stability_mac_l2", "stability_mac_l4", "conjecture_mac")

DEFAULTS = {
    "physics": {
        "eps": 0.02,          # number or ladder (list) for compare/conjecture/spectrum
        "kappa": 0.1,
        "m": 0.5,             # stability exponent
        "mu": -0.2,           # prescribed mass (mass-conserving scenarios)
        "mass_conserving": False,  # correlations scenario: which family
    },
    "noise": {
        "K": 32,
        "mean_zero": True,
        "sigma0": None,       # exactly one of sigma0 / eta / eta_power
        "eta": None,
        "eta_power": 3.0,     # eta = eta_coeff * eps^eta_power (per ladder rung)
        "eta_coeff": 1.0,
        "modes": None,        # optional mode subset carrying sigma0 (cluster spectra)
    },
    "run": {
        "dt": 1e-3,
        "replicas": 8,
        "seed": 1234,
        "horizon_rule": "c_eps_over_eta",  # or "fixed"
        "c_horizon": 0.1,
        "t_fixed": 1.0,
        "extract_every": None,  # default: 1 for stability, 5 otherwise
        "record_every": 20,     # trajectory CSV thinning (in extractions)
        "threads": 1,
        "n_steps": None,        # correlations scenario: explicit step count
    },
    "initial": {
        "h": [0.3, 0.7],
        "xi": [0.3],
        "v0_nu": None,          # optional |v0| = nu * (scenario L2 radius)
    },
    "spectrum": {
        "halfwidth": 20.0,
        "n": 4000,
        "eps_ladder": [0.04, 0.02, 0.01],
        "points_per_eps": 10,
        "kinks": [0.25, 0.5, 0.75],
    },
}


@dataclass
class ExperimentConfig:
    scenario: str
    physics: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    spectrum: dict = field(default_factory=dict)

    # -- constructors ---------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(raw) - {"scenario", "physics", "noise", "run", "initial", "spectrum"}
        if unknown:
            raise ConfigError(f"unknown top-level key {sorted(unknown)[0]!r}")
        if "scenario" not in raw:
            raise ConfigError("missing required key 'scenario'")
        scenario = raw["scenario"]
        if scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {scenario!r}; choose one of {', '.join(SCENARIOS)}"
            )
        sections = {}
        for name in ("physics", "noise", "run", "initial", "spectrum"):
            section = dict(DEFAULTS[name])
            given = raw.get(name, {})
            if not isinstance(given, dict):
                raise ConfigError(f"section {name!r} must be an object")
            for key, value in given.items():
                if key not in section:
                    raise ConfigError(f"unknown key '{name}.{key}'")
                section[key] = value
            sections[name] = section
        cfg = cls(scenario=scenario, **sections)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "physics": dict(self.physics),
            "noise": dict(self.noise),
            "run": dict(self.run),
            "initial": dict(self.initial),
            "spectrum": dict(self.spectrum),
        }

    # -- derived quantities ---------------------------------------------------

    @property
    def eps_ladder(self) -> tuple:
        eps = self.physics["eps"]
        if isinstance(eps, (int, float)):
            return (float(eps),)
        return tuple(float(e) for e in eps)

    def eta_for(self, eps: float) -> float:
        n = self.noise
        if n["sigma0"] is not None:
            count = len(n["modes"]) if n["modes"] else n["K"]
            return float(count) * float(n["sigma0"]) ** 2
        if n["eta"] is not None:
            return float(n["eta"])
        return float(n["eta_coeff"]) * eps ** float(n["eta_power"])

    def noise_model_for(self, eps: float) -> NoiseModel:
        n = self.noise
        K = int(n["K"])
        mean_zero = bool(n["mean_zero"])
        if n["modes"]:
            if n["sigma0"] is None:
                eta = self.eta_for(eps)
                sigma0 = float(np.sqrt(eta / len(n["modes"])))
            else:
                sigma0 = float(n["sigma0"])
            alphas = mode_cluster_alphas(K, sigma0, [int(k) for k in n["modes"]])
            return NoiseModel(alphas=alphas, mean_zero=mean_zero)
        if n["sigma0"] is not None:
            return build_noise(K, sigma0=float(n["sigma0"]), mean_zero=mean_zero)
        return build_noise(K, eta=self.eta_for(eps), mean_zero=mean_zero)

    def horizon_for(self, eps: float) -> float:
        if self.run["horizon_rule"] == "fixed":
            return float(self.run["t_fixed"])
        return float(self.run["c_horizon"]) * eps / self.eta_for(eps)

    @property
    def extract_every(self) -> int:
        value = self.run["extract_every"]
        if value is None:
            return 1 if self.scenario in STABILITY_SCENARIOS else 5
        return int(value)

    @property
    def is_mass_conserving(self) -> bool:
        if self.scenario in MAC_SCENARIOS:
            return True
        if self.scenario == "correlations":
            return bool(self.physics["mass_conserving"])
        return False

    # -- radii (the stability tubes) ------------------------------------------

    def radius_l2(self, eps: float) -> float:
        m = float(self.physics["m"])
        power = 1.5 + m if self.is_mass_conserving else 0.5 + m
        return eps**power

    def radius_l4(self, eps: float) -> float:
        m = float(self.physics["m"])
        kappa = float(self.physics["kappa"])
        power = (0.75 if self.is_mass_conserving else 0.25) + m / 2 - kappa
        return eps**power

    # -- validation ------------------------------------------------------------

    def validate(self):
        run, phys, noise = self.run, self.physics, self.noise
        if int(run["replicas"]) < 1:
            raise ConfigError("run.replicas must be >= 1")
        if not 0 < float(run["dt"]) <= 0.05:
            raise ConfigError("run.dt must lie in (0, 0.05] (explicit-reaction cap)")
        if run["horizon_rule"] not in ("fixed", "c_eps_over_eta"):
            raise ConfigError("run.horizon_rule must be 'fixed' or 'c_eps_over_eta'")
        if int(run["threads"]) < 1:
            raise ConfigError("run.threads must be >= 1")
        for eps in self.eps_ladder:
            if not 0 < eps <= 0.1:
                raise ConfigError(f"physics.eps = {eps} outside (0, 0.1]")
            if run["horizon_rule"] == "c_eps_over_eta" and self.eta_for(eps) == 0:
                raise ConfigError(
                    "zero noise needs horizon_rule = 'fixed' (eta = 0)")
        if not 0 < float(phys["kappa"]) <= 0.25:
            raise ConfigError("physics.kappa must lie in (0, 0.25]")
        if int(noise["K"]) < 1:
            raise ConfigError("noise.K must be >= 1")
        given = sum(noise[k] is not None for k in ("sigma0", "eta"))
        if given > 1:
            raise ConfigError("give at most one of noise.sigma0, noise.eta")
        if self.scenario in MAC_SCENARIOS or (
            self.scenario == "correlations" and self.is_mass_conserving
        ):
            if not noise["mean_zero"]:
                raise ConfigError("mass-conserving scenarios need mean-zero noise")
            if not -1.0 < float(phys["mu"]) < 1.0:
                raise ConfigError("physics.mu must lie in (-1, 1)")
        if self.scenario in STABILITY_SCENARIOS:
            m = float(phys["m"])
            for eps in self.eps_ladder:
                eta = self.eta_for(eps)
                cap_power = 4.0 + 2 * m if self.scenario in MAC_SCENARIOS else 1.0 + 2 * m
                cap = eps**cap_power
                if eta > cap * (1 + 1e-9):
                    raise ConfigError(
                        f"noise cap violated: eta = {eta:.3e} exceeds "
                        f"eps^{cap_power:g} = {cap:.3e} for {self.scenario}"
                    )
            nu = self.initial["v0_nu"]
            if nu is not None and not 0 <= float(nu) < 1:
                raise ConfigError("initial.v0_nu must lie in [0, 1)")
        if self.scenario == "spectrum":
            spec = self.spectrum
            if float(spec["halfwidth"]) < 20 or int(spec["n"]) < 2000:
                raise ConfigError("spectrum needs halfwidth >= 20 and n >= 2000")
            if int(spec["points_per_eps"]) < 5:
                raise ConfigError("spectrum.points_per_eps must be >= 5 (dx <= eps/5)")


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a JSON config file; errors carry line/field detail."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed config {path!r}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return ExperimentConfig.from_dict(raw)

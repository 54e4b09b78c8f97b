"""Run configuration: schema validation, canonicalization, hashing.

Configurations are plain JSON dicts.  Validation is strict: every key is
checked against a per-mode schema and unknown keys are rejected, so a
typo'd parameter can never silently fall back to a default.  The config
hash is the sha256 of the canonical (sorted-keys, defaults filled in)
JSON encoding and is stamped into every manifest and CSV row.
"""
from __future__ import annotations

import hashlib
import json

MODES = (
    "simulate",
    "fokker_planck",
    "verify_identities",
    "sweep_de1",
    "sweep_small_de",
    "compare_fields",
    "kernels_selftest",
)


class ConfigError(ValueError):
    """A configuration failed schema validation."""


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _check_keys(d, allowed, where):
    _require(isinstance(d, dict), f"{where}: expected an object")
    unknown = set(d) - set(allowed)
    _require(not unknown, f"{where}: unknown keys {sorted(unknown)}")


def _number(v, where, positive=False):
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), f"{where}: expected a number")
    if positive:
        _require(v > 0, f"{where}: must be positive")
    return float(v)


def _vec3(v, where):
    _require(
        isinstance(v, (list, tuple)) and len(v) == 3 and all(isinstance(c, (int, float)) for c in v),
        f"{where}: expected a 3-vector",
    )
    return [float(c) for c in v]


RESISTANCE_PRESETS = ("sphere", "anisotropic")
RESISTANCE_KEYS = ("gamma_perp", "gamma_par", "gamma_rot", "gamma_rot_par", "gamma_E")


def _validate_resistance(d):
    if isinstance(d, str):
        _require(d in RESISTANCE_PRESETS, f"resistance: unknown preset {d!r}")
        return d
    _check_keys(d, RESISTANCE_KEYS, "resistance")
    _require(set(d) == set(RESISTANCE_KEYS), "resistance: all five coefficients are required")
    return {k: _number(d[k], f"resistance.{k}") for k in RESISTANCE_KEYS}


def _validate_h(d):
    _check_keys(d, ("kind", "b", "coefficients"), "h")
    kind = d.get("kind", "zero")
    if kind == "zero":
        _require(set(d) <= {"kind"}, "h: zero field takes no coefficients")
        return {"kind": "zero"}
    if kind == "constant_b":
        _require("b" in d, "h: constant_b needs b")
        return {"kind": "constant_b", "b": _vec3(d["b"], "h.b")}
    if kind == "time_varying":
        coeffs = d.get("coefficients")
        _require(isinstance(coeffs, list) and coeffs, "h: time_varying needs coefficients")
        return {"kind": "time_varying", "coefficients": [_vec3(c, "h.coefficients") for c in coeffs]}
    raise ConfigError(f"h: unknown kind {kind!r}")


def _validate_initial(d):
    _check_keys(d, ("kind", "xi", "kappa", "mu", "cos_min"), "initial")
    kind = d.get("kind")
    if kind == "uniform":
        return {"kind": "uniform"}
    if kind == "delta":
        return {"kind": "delta", "xi": _vec3(d.get("xi", [0, 0, 1]), "initial.xi")}
    if kind == "cap":
        c = _number(d.get("cos_min", 0.5), "initial.cos_min")
        _require(-1.0 < c < 1.0, "initial.cos_min: must lie in (-1, 1)")
        return {"kind": "cap", "cos_min": c}
    if kind == "von_mises":
        return {
            "kind": "von_mises",
            "kappa": _number(d.get("kappa"), "initial.kappa", positive=True),
            "mu": _vec3(d.get("mu", [0, 0, 1]), "initial.mu"),
        }
    raise ConfigError(f"initial: unknown kind {kind!r}")


def _validate_sde(d, mode):
    _check_keys(d, ("dt", "t_end", "scaling", "scheme"), "sde")
    out = {
        "dt": _number(d.get("dt", 1e-3), "sde.dt", positive=True),
        "t_end": _number(d.get("t_end", 1.0), "sde.t_end", positive=True),
        "scaling": d.get("scaling", "small_deborah" if mode == "sweep_small_de" else "deborah_one"),
        "scheme": d.get("scheme", "heun_stratonovich"),
    }
    _require(out["scaling"] in ("deborah_one", "small_deborah"), "sde.scaling: unknown scaling")
    return out


def _validate_phi(d):
    _check_keys(d, ("x0", "rx", "t0", "t1", "a", "profile"), "test_functions.phi")
    profile = d.get("profile", "exp")
    _require(profile in ("exp", "poly8"), "phi.profile: expected 'exp' or 'poly8'")
    return {
        "x0": _vec3(d.get("x0", [0, 0, 0]), "phi.x0"),
        "rx": _number(d.get("rx", 1.5), "phi.rx", positive=True),
        "t0": _number(d.get("t0", 0.0), "phi.t0"),
        "t1": _number(d.get("t1", 0.5), "phi.t1"),
        "a": _vec3(d.get("a", [0.3, -0.7, 1.0]), "phi.a"),
        "profile": profile,
    }


def _validate_psi(d):
    _check_keys(d, ("x0", "rx", "t0", "t1", "degree"), "test_functions.psi")
    deg = d.get("degree", [2, 0])
    _require(
        isinstance(deg, (list, tuple)) and len(deg) == 2 and all(isinstance(v, int) for v in deg),
        "psi.degree: expected [l, m]",
    )
    return {
        "x0": _vec3(d.get("x0", [0, 0, 0]), "psi.x0"),
        "rx": _number(d.get("rx", 2.0), "psi.rx", positive=True),
        "t0": _number(d.get("t0", 0.0), "psi.t0"),
        "t1": _number(d.get("t1", 0.5), "psi.t1"),
        "degree": [int(deg[0]), int(deg[1])],
    }


def _validate_grid(d):
    _check_keys(d, ("nodes_per_axis", "half_extent"), "grid")
    return {
        "nodes_per_axis": int(_number(d.get("nodes_per_axis", 8), "grid.nodes_per_axis", positive=True)),
        "half_extent": _number(d.get("half_extent", 0.6), "grid.half_extent", positive=True),
    }


def _validate_particles(d):
    _check_keys(d, ("n_list", "r", "c_sep", "jitter_frac", "box"), "particles")
    n_list = d.get("n_list", [64])
    _require(
        isinstance(n_list, list) and n_list and all(isinstance(n, int) and n > 0 for n in n_list),
        "particles.n_list: expected a nonempty list of positive integers",
    )
    return {
        "n_list": list(n_list),
        "r": _number(d.get("r", 0.01), "particles.r", positive=True),
        "c_sep": _number(d.get("c_sep", 0.25), "particles.c_sep", positive=True),
        "jitter_frac": _number(d.get("jitter_frac", 0.2), "particles.jitter_frac"),
        "box": _number(d.get("box", 1.0), "particles.box", positive=True),
    }


TOP_KEYS = (
    "mode",
    "particles",
    "resistance",
    "h",
    "initial",
    "sde",
    "test_functions",
    "grid",
    "seed",
    "realizations",
    "l_max",
    "phi_n_list",
    "checkpoints",
    "fp",
    "averaging_window",
)


def validate(raw) -> dict:
    """Validate a raw config dict; returns the canonical form with defaults."""
    _check_keys(raw, TOP_KEYS, "config")
    mode = raw.get("mode")
    _require(mode in MODES, f"config.mode: expected one of {MODES}, got {mode!r}")
    cfg = {"mode": mode}
    cfg["seed"] = int(_number(raw.get("seed", 0), "seed"))
    cfg["realizations"] = int(_number(raw.get("realizations", 8), "realizations", positive=True))
    cfg["l_max"] = int(_number(raw.get("l_max", 16), "l_max", positive=True))
    cfg["particles"] = _validate_particles(raw.get("particles", {}))
    cfg["resistance"] = _validate_resistance(raw.get("resistance", "anisotropic"))
    cfg["h"] = _validate_h(raw.get("h", {"kind": "zero"}))
    cfg["initial"] = _validate_initial(raw.get("initial", {"kind": "uniform"}))
    cfg["sde"] = _validate_sde(raw.get("sde", {}), mode)
    tf = raw.get("test_functions", {})
    _check_keys(tf, ("phi", "psi", "theta"), "test_functions")
    cfg["test_functions"] = {
        "phi": _validate_phi(tf.get("phi", {})),
        "psi": _validate_psi(tf.get("psi", {})),
    }
    cfg["grid"] = _validate_grid(raw.get("grid", {}))
    fp = raw.get("fp", {})
    _check_keys(fp, ("dt", "t_end"), "fp")
    cfg["fp"] = {
        "dt": _number(fp.get("dt", 1e-3), "fp.dt", positive=True),
        "t_end": _number(fp.get("t_end", cfg["sde"]["t_end"]), "fp.t_end", positive=True),
    }
    checkpoints = raw.get("checkpoints", [cfg["sde"]["t_end"]])
    _require(isinstance(checkpoints, list) and checkpoints, "checkpoints: nonempty list")
    cfg["checkpoints"] = [_number(t, "checkpoints", positive=True) for t in checkpoints]
    phi_n_list = raw.get("phi_n_list", [0.01])
    _require(isinstance(phi_n_list, list) and phi_n_list, "phi_n_list: nonempty list")
    cfg["phi_n_list"] = [_number(v, "phi_n_list", positive=True) for v in phi_n_list]
    win = raw.get("averaging_window", [0.4 * cfg["sde"]["t_end"], cfg["sde"]["t_end"]])
    _require(
        isinstance(win, list) and len(win) == 2 and win[0] < win[1],
        "averaging_window: expected [t0, t1] with t0 < t1",
    )
    cfg["averaging_window"] = [_number(v, "averaging_window") for v in win]
    if cfg["mode"] == "sweep_small_de":
        _require(
            cfg["sde"]["scaling"] == "small_deborah",
            "sweep_small_de requires sde.scaling == small_deborah",
        )
    return cfg


def canonical_json(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def load(path) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    return validate(raw)

"""Experiment configuration: strict JSON schema and validation.

Document layout (all energies in eV)::

    {
      "experiment": "sample" | "marginal" | "landauer" | "theta",
      "model": {"kind": "degenerate-spin-bath", "D": 2, "hbar_omega0": 0.30,
                "E0": 0.0, "lambda": 1e-6}
            or {"kind": "truncated-oscillator", "M": 139 (optional),
                "hbar_omega": 0.06, "hbar_omega0": 0.30, "lambda": 1e-6},
      "thermal": {"kT": 0.45} or {"sweep": [0.03, 0.06]}, optional "beta_prime",
      "chain": {"samples": 200000, "burn_in": 20000, "seed": 0, "chains": 1,
                "bins": 40, "thinning": 1},
      "landauer": {"scenario": "bell-fidelity" | "thermal-erasure",
                   "fidelities": [...], "sizes": [8, 16, 32]},
      "output": {"dir": "out", "raw_chain": false}
    }

Unknown keys are errors.  :func:`parse_config` reports every violation at once.
A run manifest is also accepted: its embedded ``config`` section is used.
"""
import copy
import json
from dataclasses import dataclass

from .errors import InvalidInputError
from .models import DEGENERATE_SPIN_BATH, TRUNCATED_OSCILLATOR

EXPERIMENTS = ("sample", "marginal", "landauer", "theta")
MODEL_KINDS = (DEGENERATE_SPIN_BATH, TRUNCATED_OSCILLATOR)
SCENARIOS = ("bell-fidelity", "thermal-erasure")

MODEL_DEFAULTS = {
    DEGENERATE_SPIN_BATH: {"D": None, "hbar_omega0": 0.30, "E0": 0.0, "lambda": 1e-6},
    TRUNCATED_OSCILLATOR: {"M": None, "hbar_omega": 0.06, "hbar_omega0": 0.30,
                           "lambda": 1e-6},
}
CHAIN_DEFAULTS = {"samples": 200000, "burn_in": None, "seed": 0, "chains": 1, "bins": 40,
                  "thinning": 1}
LANDAUER_DEFAULTS = {"scenario": "bell-fidelity", "fidelities": None, "sizes": [8, 16, 32]}
OUTPUT_DEFAULTS = {"dir": "out", "raw_chain": False}
THERMAL_KEYS = ("kT", "sweep", "beta_prime")
TOP_KEYS = ("experiment", "model", "thermal", "chain", "landauer", "output")


class ConfigError(InvalidInputError):
    """Validation failure carrying every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings; sections are plain dicts with defaults filled."""

    experiment: str
    model: dict
    thermal: dict
    chain: dict
    landauer: dict
    output: dict

    @property
    def temperatures(self):
        """``k_B T`` values to run (one entry unless sweeping)."""
        if "sweep" in self.thermal:
            return list(self.thermal["sweep"])
        if "kT" in self.thermal:
            return [self.thermal["kT"]]
        return []

    def to_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in TOP_KEYS}


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _unknown(section, data, allowed, errs):
    for key in data:
        if key not in allowed:
            errs.append(f"{section}.{key}: unknown key")


def _positive(section, data, key, errs, allow_zero=False):
    val = data.get(key)
    if val is None:
        return
    if not _is_number(val):
        errs.append(f"{section}.{key}: must be a number")
    elif not (val >= 0 if allow_zero else val > 0):
        errs.append(f"{section}.{key}: must be {'nonnegative' if allow_zero else 'positive'} (eV)")


def _section(doc, name, errs):
    val = doc.get(name, {})
    if not isinstance(val, dict):
        errs.append(f"{name}: must be an object")
        return {}
    return val


def _check_model(raw, errs):
    kind = raw.get("kind")
    if kind not in MODEL_KINDS:
        errs.append(f"model.kind: must be one of {list(MODEL_KINDS)}")
        return {}
    allowed = ("kind",) + tuple(MODEL_DEFAULTS[kind])
    _unknown("model", raw, allowed, errs)
    model = {"kind": kind, **MODEL_DEFAULTS[kind]}
    model.update({k: v for k, v in raw.items() if k in allowed})
    for key in ("hbar_omega0", "hbar_omega", "lambda"):
        if key in model:
            _positive("model", model, key, errs)
    if "E0" in model and not _is_number(model["E0"]):
        errs.append("model.E0: must be a number")
    if kind == DEGENERATE_SPIN_BATH:
        if model["D"] is None:
            errs.append("model.D: required for the degenerate spin bath")
        elif not _is_int(model["D"]) or model["D"] < 1:
            errs.append("model.D: must be a positive integer")
    elif model["M"] is not None and (not _is_int(model["M"]) or model["M"] < 2):
        errs.append("model.M: must be an integer >= 2")
    return model


def _check_thermal(raw, required, errs):
    _unknown("thermal", raw, THERMAL_KEYS, errs)
    thermal = {k: v for k, v in raw.items() if k in THERMAL_KEYS}
    has_kt, has_sweep = "kT" in thermal, "sweep" in thermal
    if has_kt and has_sweep:
        errs.append("thermal: give exactly one of kT and sweep, not both")
    elif required and not (has_kt or has_sweep):
        errs.append("thermal: one of kT or sweep is required")
    _positive("thermal", thermal, "kT", errs)
    if has_sweep:
        sweep = thermal["sweep"]
        if (not isinstance(sweep, list) or not sweep
                or not all(_is_number(t) and t > 0 for t in sweep)):
            errs.append("thermal.sweep: must be a nonempty list of positive numbers (eV)")
    _positive("thermal", thermal, "beta_prime", errs)
    return thermal


def _check_chain(raw, errs):
    _unknown("chain", raw, tuple(CHAIN_DEFAULTS), errs)
    chain = {**CHAIN_DEFAULTS, **{k: v for k, v in raw.items() if k in CHAIN_DEFAULTS}}
    for key, low in (("samples", 1), ("chains", 1), ("bins", 2), ("thinning", 1)):
        if not _is_int(chain[key]) or chain[key] < low:
            errs.append(f"chain.{key}: must be an integer >= {low}")
    if chain["burn_in"] is not None and (not _is_int(chain["burn_in"]) or chain["burn_in"] < 0):
        errs.append("chain.burn_in: must be a nonnegative integer")
    if not _is_int(chain["seed"]) or not 0 <= chain["seed"] < 2 ** 64:
        errs.append("chain.seed: must be an unsigned 64-bit integer")
    return chain


def _check_landauer(raw, errs):
    _unknown("landauer", raw, tuple(LANDAUER_DEFAULTS), errs)
    lan = {**LANDAUER_DEFAULTS, **{k: v for k, v in raw.items() if k in LANDAUER_DEFAULTS}}
    if lan["scenario"] not in SCENARIOS:
        errs.append(f"landauer.scenario: must be one of {list(SCENARIOS)}")
    fid = lan["fidelities"]
    if fid is not None and (not isinstance(fid, list) or not fid
                            or not all(_is_number(f) and 0.5 <= f <= 1 for f in fid)):
        errs.append("landauer.fidelities: must be a nonempty list in [0.5, 1]")
    sizes = lan["sizes"]
    if not isinstance(sizes, list) or not sizes or not all(_is_int(m) and m >= 4 for m in sizes):
        errs.append("landauer.sizes: must be a nonempty list of integers >= 4")
    return lan


def _check_output(raw, errs):
    _unknown("output", raw, tuple(OUTPUT_DEFAULTS), errs)
    out = {**OUTPUT_DEFAULTS, **{k: v for k, v in raw.items() if k in OUTPUT_DEFAULTS}}
    if not isinstance(out["dir"], str) or not out["dir"]:
        errs.append("output.dir: must be a nonempty string")
    if not isinstance(out["raw_chain"], bool):
        errs.append("output.raw_chain: must be true or false")
    return out


def validate(doc):
    """Validate a decoded document and fill defaults.

    Raises:
        ConfigError: listing every violation.
    """
    if not isinstance(doc, dict):
        raise ConfigError(["top level: must be an object"])
    if "tool" in doc and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    errs = []
    _unknown("top level", doc, TOP_KEYS, errs)
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        errs.append(f"experiment: must be one of {list(EXPERIMENTS)}")
    lan = _check_landauer(_section(doc, "landauer", errs), errs)
    bell = exp == "landauer" and lan.get("scenario") == "bell-fidelity"
    thermal_erasure = exp == "landauer" and lan.get("scenario") == "thermal-erasure"
    raw_model = _section(doc, "model", errs)
    if thermal_erasure and not raw_model:
        raw_model = {"kind": TRUNCATED_OSCILLATOR}
    model = _check_model(raw_model, errs) if raw_model or not bell else {}
    if thermal_erasure and model and model["kind"] != TRUNCATED_OSCILLATOR:
        errs.append("model.kind: thermal erasure needs the truncated-oscillator bath")
    thermal = _check_thermal(_section(doc, "thermal", errs), not bell, errs)
    chain = _check_chain(_section(doc, "chain", errs), errs)
    output = _check_output(_section(doc, "output", errs), errs)
    if "beta_prime" in thermal and "sweep" in thermal:
        errs.append("thermal.beta_prime: an override cannot be shared across a sweep")
    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(exp, model, thermal, chain, lan, output)


def parse_config(text):
    """Parse and validate a JSON document.

    Args:
        text: JSON text.

    Returns:
        :class:`ExperimentConfig`.

    Raises:
        ConfigError: malformed JSON or schema violations (all of them).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON: {exc}"]) from None
    return validate(doc)

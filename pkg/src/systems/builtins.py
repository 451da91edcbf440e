from src.errors import ParameterRangeError
from src.systems.branches import FullBranchMap
from src.systems.gauss import GaussSystem
from src.systems.linear import (
    FiniteLinearSystem,
    LinearCountSystem,
    LinearExpSystem,
    LinearPolySystem,
    LuerothSystem,
)
from src.systems.manneville_pomeau import MannevillePomeauInduced
from src.utils.helper import Helper
from src.utils.logger import log_event


def _number_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


# name -> (constructor, ordered parameter names, parameter aliases)
BUILTIN_SYSTEMS = {
    "mp_induced": (lambda p: MannevillePomeauInduced(p["lambda"]), ("lambda",), {"lam": "lambda", "λ": "lambda"}),
    "linear_poly": (lambda p: LinearPolySystem(p["r"], p["s"]), ("r", "s"), {}),
    "linear_count": (lambda p: LinearCountSystem(p["a"], p["b"], p["c"]), ("a", "b", "c"), {}),
    "linear_exp": (lambda p: LinearExpSystem(p["beta"]), ("beta",), {"β": "beta"}),
    "lueroth": (lambda p: LuerothSystem(p["r"]), ("r",), {}),
    "gauss": (lambda p: GaussSystem(p["r"]), ("r",), {}),
    "finite_linear": (
        lambda p: FiniteLinearSystem(_number_list(p["lengths"]), _number_list(p.get("taus", "")) or None),
        ("lengths",),
        {},
    ),
}

LIST_PARAMETERS = {"lengths", "taus"}


def _normalize_params(name: str, params: dict) -> dict:
    _, required, aliases = BUILTIN_SYSTEMS[name]
    result = {}
    for key, value in params.items():
        key = aliases.get(key, key)
        if key == "truncation":
            result[key] = int(Helper.parse_number(str(value)))
        elif key in LIST_PARAMETERS:
            result[key] = value
        elif isinstance(value, str):
            try:
                result[key] = Helper.parse_number(value)
            except ValueError:
                raise ParameterRangeError(name, f"numeric {key}, got {value!r}")
        else:
            result[key] = value
    missing = [key for key in required if key not in result]
    if missing:
        raise ParameterRangeError(name, f"parameters {', '.join(missing)}")
    allowed = set(required) | LIST_PARAMETERS | {"truncation"}
    unknown = sorted(set(result) - allowed)
    if unknown:
        raise ParameterRangeError(name, f"only parameters {', '.join(required)}; unknown {', '.join(unknown)}")
    return result


def build_system(name: str, params: dict) -> FullBranchMap:
    """
    Builds a system by name. A `truncation` parameter returns the finite
    system made of its first N shells.
    """
    if name not in BUILTIN_SYSTEMS:
        raise ParameterRangeError(name, f"system in {{{', '.join(sorted(BUILTIN_SYSTEMS))}}}")
    params = _normalize_params(name, params)
    constructor = BUILTIN_SYSTEMS[name][0]
    system = constructor(params)
    if "truncation" in params:
        system = system.truncate(params["truncation"])
    log_event("system_built", system=system.name, params=repr(system.params))
    return system


def build_builtin(name: str, params: dict) -> tuple:
    """Returns the (FullBranchMap, Observable) pair of a builtin system."""
    system = build_system(name, params)
    return system, system.observable


# ---------------------------
# Plain-text descriptors
# ---------------------------
def descriptor_text(system: FullBranchMap) -> str:
    return Helper.to_key_value_lines(system.descriptor())


def system_from_descriptor(text: str) -> FullBranchMap:
    """
    Example:
    "system=gauss\\nr=2" -> GaussSystem(r=2)
    """
    fields = Helper.parse_key_value_lines(text)
    if "system" not in fields:
        raise ParameterRangeError("descriptor", "a system=<name> line")
    name = fields.pop("system")
    return build_system(name, fields)

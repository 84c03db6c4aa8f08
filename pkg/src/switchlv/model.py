"""Parameter records for the switching Lotka-Volterra system and their derived constants."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, asdict, replace

REGIMES = ("+", "-")
COEFFICIENTS = ("a", "b", "c", "d", "e", "f", "alpha1", "alpha2")


class InvalidEnvironment(ValueError):
    """Raised by :func:`validate`; ``problems`` lists every violated field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(str(p) for p in self.problems))


class NonPositiveParameter(ValueError):
    def __init__(self, name, value):
        self.field = name
        self.value = value
        super().__init__(f"parameter {name} must be > 0, got {value!r}")


class NonPositiveIntensity(ValueError):
    def __init__(self, name, value):
        self.field = name
        self.value = value
        super().__init__(f"switching intensity {name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class RegimeParams:
    """Lotka-Volterra coefficients and diffusivities of one environmental state.

    Prey:     u_t = alpha1 u_xx + u (a - b u - c v)
    Predator: v_t = alpha2 v_xx + v (-d + e u - f v)
    """

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    alpha1: float = 1.0
    alpha2: float = 1.0

    @property
    def carrying_capacity(self) -> float:
        return self.a / self.b


@dataclass(frozen=True)
class SwitchingEnvironment:
    """Both regimes plus the intensities of the jumps + -> - (q_plus) and - -> + (q_minus).

    Componentwise extrema over the two regimes are available as ``env.extrema["a"] == (a_min, a_max)``
    and through the ``a_max``/``a_min``-style attributes.
    """

    plus: RegimeParams
    minus: RegimeParams
    q_plus: float
    q_minus: float
    extrema: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        ext = {}
        for name in COEFFICIENTS:
            lo, hi = sorted((getattr(self.plus, name), getattr(self.minus, name)))
            ext[name] = (lo, hi)
        object.__setattr__(self, "extrema", ext)

    def __getattr__(self, item):
        # a_max, b_min, ... resolved from the cached extrema
        if item.endswith("_max") or item.endswith("_min"):
            name, which = item[:-4], item[-3:]
            ext = self.__dict__.get("extrema")
            if ext is not None and name in ext:
                return ext[name][1] if which == "max" else ext[name][0]
        raise AttributeError(item)

    def regime(self, state: str) -> RegimeParams:
        if state == "+":
            return self.plus
        if state == "-":
            return self.minus
        raise ValueError(f"unknown regime {state!r}")

    def rate(self, state: str) -> float:
        """Exit intensity of ``state``."""
        if state == "+":
            return self.q_plus
        if state == "-":
            return self.q_minus
        raise ValueError(f"unknown regime {state!r}")

    def regimes(self):
        return (self.plus, self.minus)

    def to_dict(self) -> dict:
        return {
            "plus": asdict(self.plus),
            "minus": asdict(self.minus),
            "q_plus": self.q_plus,
            "q_minus": self.q_minus,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SwitchingEnvironment":
        try:
            plus = _regime_from_dict(data["plus"], "plus")
            minus = _regime_from_dict(data["minus"], "minus")
            q_plus = float(data["q_plus"])
            q_minus = float(data["q_minus"])
        except KeyError as exc:
            raise KeyError(f"environment is missing key {exc.args[0]!r}") from None
        return cls(plus, minus, q_plus, q_minus)

    @classmethod
    def from_json(cls, text: str) -> "SwitchingEnvironment":
        return cls.from_dict(json.loads(text))

    def with_value(self, path: str, value: float) -> "SwitchingEnvironment":
        """Copy with one field replaced; ``path`` is ``q_plus``, ``q_minus`` or ``plus.d``-style."""
        if path in ("q_plus", "q_minus"):
            return replace(self, **{path: float(value)})
        side, _, name = path.partition(".")
        if side not in ("plus", "minus") or name not in COEFFICIENTS:
            raise KeyError(path)
        reg = replace(getattr(self, side), **{name: float(value)})
        return replace(self, **{side: reg})

    def get_value(self, path: str) -> float:
        if path in ("q_plus", "q_minus"):
            return getattr(self, path)
        side, _, name = path.partition(".")
        if side not in ("plus", "minus") or name not in COEFFICIENTS:
            raise KeyError(path)
        return getattr(getattr(self, side), name)


def _regime_from_dict(data: dict, where: str) -> RegimeParams:
    kwargs = {}
    for f_ in fields(RegimeParams):
        if f_.name not in data:
            raise KeyError(f"{where}.{f_.name}")
        kwargs[f_.name] = float(data[f_.name])
    unknown = set(data) - set(kwargs)
    if unknown:
        raise KeyError(f"{where}.{sorted(unknown)[0]}")
    return RegimeParams(**kwargs)


@dataclass(frozen=True)
class BoundConstants:
    m1: float
    m2: float


def validate(env: SwitchingEnvironment) -> SwitchingEnvironment:
    """Return ``env`` unchanged if every coefficient and intensity is strictly positive.

    Raises :class:`InvalidEnvironment` listing one :class:`NonPositiveParameter` or
    :class:`NonPositiveIntensity` per violated field otherwise.
    """
    problems = []
    for side in ("plus", "minus"):
        reg = getattr(env, side)
        for name in COEFFICIENTS:
            value = getattr(reg, name)
            if not (math.isfinite(value) and value > 0):
                problems.append(NonPositiveParameter(f"{side}.{name}", value))
    for name in ("q_plus", "q_minus"):
        value = getattr(env, name)
        if not (math.isfinite(value) and value > 0):
            problems.append(NonPositiveIntensity(name, value))
    if problems:
        raise InvalidEnvironment(problems)
    return env


def bound_constants(env: SwitchingEnvironment, u0_sup: float = 0.0, v0_sup: float = 0.0,
                    margin: float = 0.01) -> BoundConstants:
    """A priori sup-norm bounds for prey and predator densities.

    The bounds hold for every trajectory started below ``u0_sup``/``v0_sup``; ``margin``
    supplies the slack required by the strict inequalities.
    """
    validate(env)
    if u0_sup < 0 or v0_sup < 0:
        raise ValueError("initial sup values must be nonnegative")
    if margin <= 0:
        raise ValueError("margin must be positive")
    regs = env.regimes()
    m1 = (1.0 + margin) * max(max(r.a / r.b for r in regs), u0_sup, 0.0)
    inner = max(
        max(r.a / r.c for r in regs),
        max((m1 * r.e - r.d) / r.f for r in regs),
        v0_sup,
        0.0,
    )
    return BoundConstants(m1=m1, m2=(1.0 + margin) * inner)


EXAMPLES = {
    "5.2": SwitchingEnvironment(
        plus=RegimeParams(a=1.0, b=1.0, c=1.0, d=2.0, e=1.0, f=1.0, alpha1=1.0, alpha2=1.0),
        minus=RegimeParams(a=3.0, b=1.0, c=1.0, d=7.0, e=2.0, f=1.0, alpha1=1.0, alpha2=1.0),
        q_plus=5.0,
        q_minus=5.0,
    ),
    "5.3": SwitchingEnvironment(
        plus=RegimeParams(a=5.0, b=1.0, c=1.0, d=0.5, e=2.0, f=1.0, alpha1=1.0, alpha2=1.0),
        minus=RegimeParams(a=15.0, b=1.0, c=1.0, d=1.0, e=2.0, f=3.0, alpha1=1.0, alpha2=1.0),
        q_plus=5.0,
        q_minus=5.0,
    ),
}


def example_environment(example_id: str) -> SwitchingEnvironment:
    try:
        return EXAMPLES[example_id]
    except KeyError:
        raise KeyError(f"unknown example {example_id!r}; known: {sorted(EXAMPLES)}") from None

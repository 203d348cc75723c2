from __future__ import annotations

import re
from typing import List, Optional, Sequence, Tuple

from cooc.core.correlation import LabelSpace
from cooc.errors import ConfigError

# "AU01:AU02" or "AU01 : AU02"
_PAIR_RE = re.compile(r"^\s*(?P<a>[^:\s][^:]*?)\s*:\s*(?P<b>[^:\s][^:]*?)\s*$")


def resolve_class_name(token: str, space: LabelSpace) -> Optional[str]:
    """
    Map a user-typed class token onto the label space.
    Exact match wins, then a case-insensitive match; None when nothing matches.
    """
    t = token.strip()
    if not t:
        return None
    if t in space.class_names:
        return t

    lowered = {n.lower(): n for n in space.class_names}
    return lowered.get(t.lower())


def parse_pair_token(token: str, space: LabelSpace) -> Tuple[str, str]:
    m = _PAIR_RE.match(token)
    if not m:
        raise ConfigError(f"bad class pair '{token}' (expected A:B)")
    a = resolve_class_name(m.group("a"), space)
    b = resolve_class_name(m.group("b"), space)
    if not a or not b:
        raise ConfigError(f"pair '{token}' names an unknown class")
    if a == b:
        raise ConfigError(f"pair '{token}' repeats one class")
    return a, b


def parse_pairs(tokens: Sequence[str], space: LabelSpace) -> List[Tuple[str, str]]:
    return [parse_pair_token(t, space) for t in tokens]


def parse_rho_list(text: str) -> Tuple[float, ...]:
    rhos: List[float] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            rho = float(token)
        except ValueError:
            raise ConfigError(f"rho value '{token}' is not a number") from None
        if not 0.0 <= rho <= 1.0:
            raise ConfigError(f"rho value {rho} outside [0, 1]")
        rhos.append(rho)
    if not rhos:
        raise ConfigError("at least one rho value is required")
    return tuple(rhos)


def rho_label(rho: float) -> str:
    """Stable file-name token for a rho value, e.g. 0.45 -> 'rho-0.45'."""
    return f"rho-{rho:g}"

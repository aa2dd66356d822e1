"""Named parameter tensors."""

from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from ..errors import NonFiniteError

Tensor = npt.NDArray[np.float64]


@dataclass
class ParamStore:
    """An ordered set of named float64 tensors."""

    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __setitem__(self, name: str, value: Tensor) -> None:
        self.tensors[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: object) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    @property
    def total_count(self) -> int:
        """Number of scalar parameters."""
        return sum(int(t.size) for t in self.tensors.values())

    def copy(self) -> "ParamStore":
        return ParamStore({name: t.copy() for name, t in self.tensors.items()})

    def zeros_like(self) -> "ParamStore":
        return ParamStore({name: np.zeros_like(t) for name, t in self.tensors.items()})

    def check_finite(self, what: str = "parameter") -> None:
        """Raise NonFiniteError naming the first tensor holding NaN or Inf."""
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NonFiniteError(f"{what} {name}")

    def select(self, prefix: str) -> "ParamStore":
        """Tensors whose names start with prefix."""
        return ParamStore({n: t for n, t in self.tensors.items() if n.startswith(prefix)})

    @classmethod
    def from_mapping(cls, tensors: Mapping[str, npt.ArrayLike]) -> "ParamStore":
        return cls({name: np.asarray(value, dtype=np.float64) for name, value in tensors.items()})


def add_gradients(total: dict[str, Tensor], part: Mapping[str, Tensor], weight: float = 1.0) -> None:
    """Accumulate weight * part into total in place (ordered reduction step)."""
    for name, grad in part.items():
        if name in total:
            total[name] += weight * grad
        else:
            total[name] = weight * grad

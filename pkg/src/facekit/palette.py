"""The fixed 7-class face palette.

Index assignment is frozen here and in the mask file format:
0=back, 1=skin, 2=hair, 3=eyes, 4=brows, 5=nose, 6=mouth.
"""

from __future__ import annotations

from dataclasses import dataclass

CLASS_NAMES = ("back", "skin", "hair", "eyes", "brows", "nose", "mouth")
CLASS_COUNT = len(CLASS_NAMES)

# display colors for overlays and charts (RGB, 8-bit)
CLASS_COLORS = (
    (64, 64, 80),      # back
    (235, 180, 140),   # skin
    (120, 70, 30),     # hair
    (40, 160, 220),    # eyes
    (30, 60, 30),      # brows
    (230, 220, 60),    # nose
    (210, 50, 70),     # mouth
)

# pixel classes the second-stage feature stack keeps, in order:
# hair, eyes, brows, nose, mouth
FEATURE_CLASS_INDICES = (2, 3, 4, 5, 6)
MINOR_CLASS_INDICES = FEATURE_CLASS_INDICES


@dataclass(frozen=True)
class ClassPalette:
    names: tuple[str, ...] = CLASS_NAMES
    colors: tuple[tuple[int, int, int], ...] = CLASS_COLORS

    def __post_init__(self):
        if len(self.names) != CLASS_COUNT or len(self.colors) != CLASS_COUNT:
            raise ValueError(f"palette must have exactly {CLASS_COUNT} entries")

    def index(self, name: str) -> int:
        return self.names.index(name)

    def entries(self) -> list[dict]:
        return [
            {"index": i, "name": n, "color": list(c)}
            for i, (n, c) in enumerate(zip(self.names, self.colors))
        ]


DEFAULT_PALETTE = ClassPalette()

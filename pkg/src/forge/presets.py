"""Scale presets for simulation and dataset generation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class Preset:
    name: str
    spin_size: int  # isochromat grid edge
    matrix: int  # acquisition matrix edge
    esp_ms: float
    fov_cm: float
    label_size: int  # D_m label / zero-filled input edge
    num_coils: int
    template_pool: int
    coil_pool: int
    source_size: int  # edge of the built-in weighted source images
    R: int = 2
    mask_offset: int = 0
    pool_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def updated(self, **overrides) -> "Preset":
        known = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in overrides.items() if k in known})


DESK = Preset(
    name="desk",
    spin_size=128,
    matrix=64,
    esp_ms=0.93,
    fov_cm=22.0,
    label_size=64,
    num_coils=8,
    template_pool=4,
    coil_pool=10,
    source_size=128,
)

PAPER = Preset(
    name="paper",
    spin_size=512,
    matrix=128,
    esp_ms=0.465,
    fov_cm=22.0,
    label_size=256,
    num_coils=16,
    template_pool=20,
    coil_pool=20,
    source_size=256,
)

PRESETS = {"desk": DESK, "paper": PAPER}

PAPER_SCALE_WARNING = (
    "warning: paper-scale preset (512x512 spins, 128x128 acquisition) costs roughly "
    "16x the desk preset per sample; thousands of samples take many CPU-hours"
)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None

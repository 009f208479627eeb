"""The six task variants and their capability flags.

Difficulty increases from single-object instance recognition up to the full
task: multi-object scenes, support assignment by mutual exclusivity, and
predicted (rather than ground-truth) instance masks.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class VariantConfig:
    name: str
    multi_object: bool
    pose_var: bool
    needs_support_assignment: bool
    needs_localization: bool

    def __post_init__(self) -> None:
        if self.needs_localization and not (
            self.multi_object and self.needs_support_assignment
        ):
            raise ConfigurationError(
                f"variant {self.name!r}: localization implies multi-object "
                "scenes and support assignment"
            )

    @property
    def instance_level(self) -> bool:
        """Query objects are the same instance as the support (easiest tier)."""
        return self.name == "inst-sobj"

    @property
    def objects_per_scene(self) -> int:
        return 3 if self.multi_object else 1

    @property
    def uses_pose_bank(self) -> bool:
        # Multi-object scenes always draw poses; single-object only when
        # pose variation is part of the variant.
        return self.pose_var or self.multi_object


VARIANTS: dict[str, VariantConfig] = {
    v.name: v
    for v in (
        VariantConfig("inst-sobj", False, False, False, False),
        VariantConfig("categ-sobj", False, False, False, False),
        VariantConfig("categ-sobj-posevar", False, True, False, False),
        VariantConfig("categ-mobj", True, True, False, False),
        VariantConfig("categ-mobj-suppassign", True, True, True, False),
        VariantConfig("lsme", True, True, True, True),
    )
}


def get_variant(name: str) -> VariantConfig:
    key = name.lower()
    if key not in VARIANTS:
        raise ConfigurationError(
            f"unknown variant {name!r}; choose from {sorted(VARIANTS)}"
        )
    return VARIANTS[key]

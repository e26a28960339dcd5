"""Biometric trait channels handled by the system."""

from enum import Enum


class Modality(str, Enum):
    FACE = "face"
    PALM = "palm"

    def __str__(self) -> str:
        return self.value

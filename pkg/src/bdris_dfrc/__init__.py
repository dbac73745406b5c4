"""Joint waveform / BD-RIS / receive-filter design for DFRC systems.

Library layout:

- ``scenario``  — configuration parsing, path loss, range rings
- ``channel``   — steering vectors, radar channels, Rician fading, shifts
- ``quadforms`` — the three equivalent SCNR quadratic-form families
- ``conic``     — real-embedded SOCPs and the interior-point solver
- ``admm``      — block updates and the full alternating solver
- ``metrics``   — detection probability, BER, beampatterns
- ``cli``       — ``bdris-dfrc solve | sweep | metrics``
"""

from importlib import resources

__version__ = "0.1.0"


def bundled_scenario(name: str) -> str:
    """Return the text of a bundled scenario file (``full_default`` or
    ``desk_default``)."""
    return (resources.files("bdris_dfrc") / "data" / f"{name}.ini").read_text()

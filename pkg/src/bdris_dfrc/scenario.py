"""Scenario configuration: parsing, geometry-derived quantities, validation.

A scenario file is INI-style text with five sections:

``[system]``
    n_tx, n_cells, n_rx, code_len, psk_order, power_budget_w,
    noise_comm_dbm, noise_radar_dbm, qos_db, groups, arch,
    sample_rate_hz, rng_seed, bs_ris_distance_m.

``[pathloss]``
    ref_gain_db, ref_distance_m, exp_bs_ris, exp_ris_user,
    exp_ris_target, exp_ris_clutter.

``[users]`` / ``[targets]`` / ``[clutters]``
    One entity per line, ``name = key=value, key=value, ...``.
    Users take ``side`` and ``distance_m`` (optional ``qos_db`` override).
    Targets take ``side``, ``range_m``, ``azimuth_deg``, ``rcs_db``.
    Clutters additionally take ``count``; ``range_m`` or ``azimuth_deg``
    may be an interval ``[a:b]`` which expands to ``count`` evenly spaced
    point sources (scalar fields are broadcast).

Angles are degrees, ranges/distances meters, noise powers dBm, gains dB.
All dB/dBm quantities are converted to linear scale exactly once, at load;
every numeric kernel downstream works in linear units (watts).

Side tags: ``T`` (transmissive) and ``R`` (reflective); the long names are
accepted in files and normalized.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

# Radar convention: c chosen so the range resolution c/(2*150 MHz) is
# exactly 1 m; rings are integer multiples of the resolution cell.
SPEED_OF_LIGHT = 3.0e8

ARCHITECTURES = ("CW-SC", "CW-GC", "CW-FC", "DOUBLE-RIS", "RADAR-ONLY")
SIDES = ("T", "R")

_SIDE_ALIASES = {
    "t": "T", "transmissive": "T",
    "r": "R", "reflective": "R",
}


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario configuration."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def pathloss(d: float, exponent: float,
             ref_gain_db: float = -30.0, ref_distance_m: float = 1.0) -> float:
    """Distance-dependent path loss, linear power gain.

    gain = aleph * (d/d0)^(-exponent) with aleph the linear reference gain.
    """
    if d <= 0:
        raise ScenarioError(f"nonpositive distance {d}")
    aleph = db_to_linear(ref_gain_db)
    return aleph * (d / ref_distance_m) ** (-exponent)


@dataclass
class PathlossModel:
    ref_gain_db: float = -30.0
    ref_distance_m: float = 1.0
    exp_bs_ris: float = 2.2
    exp_ris_user: float = 2.2
    exp_ris_target: float = 2.0
    exp_ris_clutter: float = 2.0

    def gain(self, d: float, exponent: float) -> float:
        return pathloss(d, exponent, self.ref_gain_db, self.ref_distance_m)


@dataclass
class User:
    side: str
    distance_m: float
    qos_db: float | None = None      # per-user override of the scenario Γ
    # derived at load
    gamma_linear: float = 0.0
    pl_gain: float = 0.0             # RIS→user link power gain


@dataclass
class Target:
    side: str
    range_m: float
    azimuth_deg: float
    rcs_db: float
    # derived at load
    ring: int = 0                    # r_T^k, delay offset in samples
    zeta_sq: float = 0.0             # expected echo power incl. path loss


@dataclass
class Clutter:
    side: str
    range_m: float
    azimuth_deg: float
    rcs_db: float
    # derived at load
    ring: int = 0                    # r_C^q, may be negative
    xi_sq: float = 0.0


@dataclass
class Scenario:
    n_tx: int
    n_cells: int
    n_rx: int
    code_len: int
    psk_order: int
    power_budget: float              # E, watts
    noise_comm: float                # sigma^2_C, watts (linear)
    noise_radar: float               # sigma^2_R, watts (linear)
    qos_db: float                    # Γ threshold, dB (per-user override in User)
    groups: int                      # G; block size M = n_cells // G
    arch: str
    sample_rate: float               # f_s, Hz
    rng_seed: int
    bs_ris_distance_m: float
    rician_k_db: float = 3.0
    pathloss: PathlossModel = field(default_factory=PathlossModel)
    users: list[User] = field(default_factory=list)
    targets: list[Target] = field(default_factory=list)
    clutters: list[Clutter] = field(default_factory=list)
    l_obs: dict[str, int] = field(default_factory=dict)   # per side

    # -- convenience -------------------------------------------------------

    @property
    def block_size(self) -> int:
        return self.n_cells // self.groups

    @property
    def qos_linear(self) -> float:
        return db_to_linear(self.qos_db)

    def targets_on(self, side: str) -> list[tuple[int, Target]]:
        return [(k, t) for k, t in enumerate(self.targets) if t.side == side]

    def clutters_on(self, side: str) -> list[tuple[int, Clutter]]:
        return [(q, c) for q, c in enumerate(self.clutters) if c.side == side]

    def users_on(self, side: str) -> list[tuple[int, User]]:
        return [(u, x) for u, x in enumerate(self.users) if x.side == side]

    def n_obs(self, side: str) -> int:
        return self.l_obs[side]

    def validate(self) -> None:
        if self.n_cells % self.groups != 0:
            raise ScenarioError(
                f"n_cells={self.n_cells} not divisible by groups={self.groups}")
        if self.arch not in ARCHITECTURES:
            raise ScenarioError(f"unknown architecture {self.arch!r}")
        if self.arch == "DOUBLE-RIS" and self.n_cells % 2 != 0:
            raise ScenarioError("DOUBLE-RIS needs an even cell count")
        if not self.targets:
            raise ScenarioError("empty target list")
        if self.power_budget < 0:
            raise ScenarioError("negative power budget")
        if self.noise_comm <= 0 or self.noise_radar <= 0:
            raise ScenarioError("noise variances must be positive")
        if self.psk_order < 2 or self.psk_order & (self.psk_order - 1):
            raise ScenarioError("psk_order must be a power of two >= 2")
        for t in self.targets + self.clutters:
            if t.side not in SIDES:
                raise ScenarioError(f"bad side tag {t.side!r}")
        for u in self.users:
            if u.distance_m <= 0:
                raise ScenarioError("user distance must be positive")
        for side in SIDES:
            rings = [t.ring for _, t in self.targets_on(side)]
            if rings and min(rings) != 0:
                raise ScenarioError(f"side {side}: smallest target ring must be 0")


# -- ring / observation-window arithmetic ----------------------------------

def derive_rings(scenario: Scenario) -> tuple[dict[str, list[int]],
                                              dict[str, list[int]],
                                              dict[str, int]]:
    """Range rings and observation length per side.

    Round-trip delay tau = 2*range/c; rings count whole sample offsets from
    the earliest same-side target echo:

        r_T^k = floor((tau_T^k - min tau_T) * f_s)
        r_C^q = floor((tau_C^q - min tau_T) * f_s)      (may be negative)
        L_obs = L + max_k r_T^k - min_k r_T^k

    Returns (target_rings, clutter_rings, l_obs), each keyed by side, ring
    lists in entity order. Clutter rings may be negative or beyond the last
    target ring; shift matrices clip them.
    """
    delta_d = SPEED_OF_LIGHT / (2.0 * scenario.sample_rate)  # one ring in meters

    def ring_of(rng_m: float, ref_m: float) -> int:
        # tiny nudge keeps exact-integer cells from flooring down on float fuzz
        return math.floor((rng_m - ref_m) / delta_d + 1e-7)

    target_rings: dict[str, list[int]] = {}
    clutter_rings: dict[str, list[int]] = {}
    l_obs: dict[str, int] = {}
    for side in SIDES:
        tgt = [t for _, t in scenario.targets_on(side)]
        clt = [c for _, c in scenario.clutters_on(side)]
        if not tgt:
            target_rings[side] = []
            clutter_rings[side] = [0] * len(clt)
            l_obs[side] = scenario.code_len
            continue
        ref = min(t.range_m for t in tgt)
        target_rings[side] = [ring_of(t.range_m, ref) for t in tgt]
        clutter_rings[side] = [ring_of(c.range_m, ref) for c in clt]
        l_obs[side] = scenario.code_len + max(target_rings[side])
    return target_rings, clutter_rings, l_obs


# -- config text parsing ----------------------------------------------------

def _parse_interval(tok: str) -> tuple[float, float] | float:
    tok = tok.strip()
    if tok.startswith("[") and tok.endswith("]"):
        lo, hi = tok[1:-1].split(":")
        return float(lo), float(hi)
    return float(tok)


def _parse_fields(line: str, name: str) -> dict[str, object]:
    out: dict[str, object] = {}
    for part in line.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ScenarioError(f"{name}: expected key=value, got {part!r}")
        key, val = part.split("=", 1)
        key = key.strip().lower()
        val = val.strip()
        if key == "side":
            side = _SIDE_ALIASES.get(val.lower())
            if side is None:
                raise ScenarioError(f"{name}: unknown side {val!r}")
            out[key] = side
        elif key == "count":
            out[key] = int(val)
        else:
            out[key] = _parse_interval(val)
    return out


def _expand(value: object, count: int) -> list[float]:
    if isinstance(value, tuple):
        lo, hi = value
        if count == 1:
            return [0.5 * (lo + hi)]
        step = (hi - lo) / (count - 1)
        return [lo + i * step for i in range(count)]
    return [float(value)] * count  # type: ignore[arg-type]


def load_scenario(config_text: str) -> Scenario:
    """Parse scenario text, derive rings/powers, validate. See module docs."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower  # type: ignore[assignment]
    try:
        cp.read_file(io.StringIO(config_text))
    except configparser.Error as exc:
        raise ScenarioError(f"config syntax: {exc}") from exc

    for sec in ("system", "targets"):
        if not cp.has_section(sec):
            raise ScenarioError(f"missing [{sec}] section")

    sysc = cp["system"]

    def s_float(key: str, default: float | None = None) -> float:
        if key not in sysc:
            if default is None:
                raise ScenarioError(f"[system] missing {key}")
            return default
        return float(sysc[key])

    def s_int(key: str, default: int | None = None) -> int:
        return int(s_float(key, None if default is None else float(default)))

    pl = PathlossModel()
    if cp.has_section("pathloss"):
        p = cp["pathloss"]
        pl = PathlossModel(
            ref_gain_db=float(p.get("ref_gain_db", pl.ref_gain_db)),
            ref_distance_m=float(p.get("ref_distance_m", pl.ref_distance_m)),
            exp_bs_ris=float(p.get("exp_bs_ris", pl.exp_bs_ris)),
            exp_ris_user=float(p.get("exp_ris_user", pl.exp_ris_user)),
            exp_ris_target=float(p.get("exp_ris_target", pl.exp_ris_target)),
            exp_ris_clutter=float(p.get("exp_ris_clutter", pl.exp_ris_clutter)),
        )

    arch = sysc.get("arch", "CW-FC").strip().upper()
    if arch not in ARCHITECTURES:
        raise ScenarioError(f"unknown architecture {arch!r}")
    n_cells = s_int("n_cells")
    if arch == "CW-FC":
        groups = 1
    elif arch in ("CW-SC", "DOUBLE-RIS"):
        groups = n_cells
    else:
        groups = s_int("groups", 1)

    users: list[User] = []
    if cp.has_section("users"):
        for name, line in cp["users"].items():
            f = _parse_fields(line, name)
            users.append(User(
                side=str(f["side"]),
                distance_m=float(f["distance_m"]),  # type: ignore[arg-type]
                qos_db=float(f["qos_db"]) if "qos_db" in f else None,  # type: ignore[arg-type]
            ))

    targets: list[Target] = []
    for name, line in cp["targets"].items():
        f = _parse_fields(line, name)
        count = int(f.get("count", 1))  # type: ignore[arg-type]
        rngs = _expand(f["range_m"], count)
        azis = _expand(f["azimuth_deg"], count)
        for rng_m, azi in zip(rngs, azis):
            targets.append(Target(side=str(f["side"]), range_m=rng_m,
                                  azimuth_deg=azi,
                                  rcs_db=float(f["rcs_db"])))  # type: ignore[arg-type]

    clutters: list[Clutter] = []
    if cp.has_section("clutters"):
        for name, line in cp["clutters"].items():
            f = _parse_fields(line, name)
            count = int(f.get("count", 1))  # type: ignore[arg-type]
            rngs = _expand(f["range_m"], count)
            azis = _expand(f["azimuth_deg"], count)
            for rng_m, azi in zip(rngs, azis):
                clutters.append(Clutter(side=str(f["side"]), range_m=rng_m,
                                        azimuth_deg=azi,
                                        rcs_db=float(f["rcs_db"])))  # type: ignore[arg-type]

    sc = Scenario(
        n_tx=s_int("n_tx"),
        n_cells=n_cells,
        n_rx=s_int("n_rx"),
        code_len=s_int("code_len"),
        psk_order=s_int("psk_order", 4),
        power_budget=s_float("power_budget_w"),
        noise_comm=dbm_to_watt(s_float("noise_comm_dbm")),
        noise_radar=dbm_to_watt(s_float("noise_radar_dbm")),
        qos_db=s_float("qos_db", 0.0),
        groups=groups,
        arch=arch,
        sample_rate=s_float("sample_rate_hz"),
        rng_seed=s_int("rng_seed", 0),
        bs_ris_distance_m=s_float("bs_ris_distance_m"),
        rician_k_db=s_float("rician_k_db", 3.0),
        pathloss=pl,
        users=users,
        targets=targets,
        clutters=clutters,
    )

    t_rings, c_rings, l_obs = derive_rings(sc)
    for side in SIDES:
        for (k, t), r in zip(sc.targets_on(side), t_rings[side]):
            t.ring = r
        for (q, c), r in zip(sc.clutters_on(side), c_rings[side]):
            c.ring = r
    sc.l_obs = l_obs

    # propagation powers: one-way BS->RIS hop, two-way RIS->scatterer->RIS
    bs_hop = pl.gain(sc.bs_ris_distance_m, pl.exp_bs_ris)
    for t in sc.targets:
        t.zeta_sq = db_to_linear(t.rcs_db) * bs_hop * pl.gain(t.range_m, pl.exp_ris_target) ** 2
    for c in sc.clutters:
        c.xi_sq = db_to_linear(c.rcs_db) * bs_hop * pl.gain(c.range_m, pl.exp_ris_clutter) ** 2
    for u in sc.users:
        u.pl_gain = pl.gain(u.distance_m, pl.exp_ris_user)
        u.gamma_linear = db_to_linear(u.qos_db if u.qos_db is not None else sc.qos_db)

    sc.validate()
    return sc


def load_scenario_file(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())

"""Network data model and case-file parsing.

Two input dialects produce the same immutable Network value: a subset of the
MATPOWER ``.m`` case format (baseMVA plus bus/gen/branch matrices) and a
native TOML-based format that can also carry DER ensemble annotations.

Unit conventions: loads and generator outputs are stored in MW / MVAr,
branch impedances and shunt admittances in per-unit on ``base_mva``.
Conversion to per-unit happens once, on solver entry.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from enum import Enum

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class CaseError(ValueError):
    """Base class for case-file problems."""


class MissingSection(CaseError):
    """A required section (baseMVA, bus, gen, branch) is absent."""


class MalformedMatrix(CaseError):
    """A matrix is non-rectangular, non-numeric, or too narrow."""


class UnknownBusReference(CaseError):
    """A branch or generator refers to a bus id that does not exist."""


class DuplicateBusId(CaseError):
    """Two bus rows share the same external id."""


class InvalidCaseError(CaseError):
    """A parsed value violates a Network invariant."""


class BusKind(Enum):
    SLACK = "SLACK"
    PV = "PV"
    PQ = "PQ"


@dataclass(frozen=True)
class Bus:
    """One network bus. Loads in MW/MVAr, shunts in p.u. admittance."""

    id: int
    kind: BusKind
    p_load: float = 0.0
    q_load: float = 0.0
    v_set: float = 1.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0

    def __post_init__(self):
        if self.kind in (BusKind.SLACK, BusKind.PV) and not self.v_set > 0:
            raise InvalidCaseError(
                f"bus {self.id}: v_set must be > 0 for {self.kind.value} buses"
            )


@dataclass(frozen=True)
class Branch:
    """Pi-model branch between internal bus indices.

    b_charging is the TOTAL line-charging susceptance; half is applied at
    each end. tap is the off-nominal turns ratio at the from side.
    """

    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    status: bool = True

    def __post_init__(self):
        if self.r == 0.0 and self.x == 0.0:
            raise InvalidCaseError(
                f"branch {self.from_bus}-{self.to_bus}: r and x are both zero"
            )
        if not self.tap > 0:
            raise InvalidCaseError(
                f"branch {self.from_bus}-{self.to_bus}: tap must be > 0"
            )
        if self.from_bus == self.to_bus:
            raise InvalidCaseError(f"branch at bus {self.from_bus}: self-loop")


@dataclass(frozen=True)
class Generator:
    """Fixed-output generator. DER units are toggled by the commitment."""

    bus: int
    p_out: float
    q_min: float = 0.0
    q_max: float = 0.0
    is_der: bool = False
    agent_id: int | None = None

    def __post_init__(self):
        if self.q_min > self.q_max:
            raise InvalidCaseError(
                f"generator at bus index {self.bus}: q_min > q_max"
            )
        if self.is_der and self.agent_id is None:
            raise InvalidCaseError(
                f"generator at bus index {self.bus}: DER without agent_id"
            )


_DER_KINDS = ("TYPE1", "TYPE2", "CONSTANT")


@dataclass(frozen=True)
class DerSpec:
    """Ensemble annotation tying one generator to a probability response.

    kind TYPE1/TYPE2 take a slope xi and offset x0; CONSTANT takes a fixed
    probability value. group tags agents for fairness comparisons.
    """

    gen_index: int
    group: str
    kind: str
    xi: float = 0.0
    x0: float = 0.0
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in _DER_KINDS:
            raise InvalidCaseError(f"der[{self.gen_index}]: unknown kind {self.kind!r}")
        if self.kind in ("TYPE1", "TYPE2") and not self.xi > 0:
            raise InvalidCaseError(f"der[{self.gen_index}]: xi must be > 0")
        if self.kind == "CONSTANT" and not 0.0 <= self.value <= 1.0:
            raise InvalidCaseError(f"der[{self.gen_index}]: value must be in [0,1]")


@dataclass(frozen=True)
class Network:
    """Immutable picture of the plant: buses, branches, generators, DERs."""

    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    gens: tuple[Generator, ...]
    slack_index: int
    ders: tuple[DerSpec, ...] = ()

    def __post_init__(self):
        if not self.base_mva > 0:
            raise InvalidCaseError("base_mva must be > 0")
        seen: set[int] = set()
        for bus in self.buses:
            if bus.id in seen:
                raise DuplicateBusId(f"duplicate bus id {bus.id}")
            seen.add(bus.id)
        slack = [i for i, b in enumerate(self.buses) if b.kind is BusKind.SLACK]
        if len(slack) != 1:
            raise InvalidCaseError(f"need exactly one slack bus, found {len(slack)}")
        if self.slack_index != slack[0]:
            raise InvalidCaseError("slack_index does not point at the slack bus")
        n = len(self.buses)
        for br in self.branches:
            if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
                raise InvalidCaseError(
                    f"branch {br.from_bus}-{br.to_bus}: bus index out of range"
                )
        for g in self.gens:
            if not 0 <= g.bus < n:
                raise InvalidCaseError(f"generator bus index {g.bus} out of range")
        der_gens = [i for i, g in enumerate(self.gens) if g.is_der]
        if len(der_gens) != len(self.ders):
            raise InvalidCaseError(
                f"{len(der_gens)} DER generators but {len(self.ders)} der annotations"
            )
        for j, d in enumerate(self.ders):
            if not 0 <= d.gen_index < len(self.gens):
                raise InvalidCaseError(f"der[{j}]: gen index {d.gen_index} out of range")
            g = self.gens[d.gen_index]
            if not g.is_der or g.agent_id != j:
                raise InvalidCaseError(f"der[{j}]: generator link inconsistent")
        self._check_finite()

    def _check_finite(self):
        for bus in self.buses:
            for v in (bus.p_load, bus.q_load, bus.v_set, bus.shunt_g, bus.shunt_b):
                if not math.isfinite(v):
                    raise InvalidCaseError(f"bus {bus.id}: non-finite field")
        for br in self.branches:
            for v in (br.r, br.x, br.b_charging, br.tap):
                if not math.isfinite(v):
                    raise InvalidCaseError(
                        f"branch {br.from_bus}-{br.to_bus}: non-finite field"
                    )
        for g in self.gens:
            for v in (g.p_out, g.q_min, g.q_max):
                if not math.isfinite(v):
                    raise InvalidCaseError(f"generator at {g.bus}: non-finite field")

    @classmethod
    def assemble(cls, base_mva, buses, branches, gens, ders=()) -> "Network":
        """Build a Network, wiring DER flags onto generators from `ders`.

        Incoming generators must carry is_der=False; the annotation list is
        the single source of DER membership.
        """
        gens = list(gens)
        seen_gen: set[int] = set()
        for j, d in enumerate(ders):
            if not 0 <= d.gen_index < len(gens):
                raise InvalidCaseError(f"der[{j}]: gen index {d.gen_index} out of range")
            if d.gen_index in seen_gen:
                raise InvalidCaseError(f"der[{j}]: generator {d.gen_index} annotated twice")
            seen_gen.add(d.gen_index)
            gens[d.gen_index] = replace(gens[d.gen_index], is_der=True, agent_id=j)
        slack = [i for i, b in enumerate(buses) if b.kind is BusKind.SLACK]
        if len(slack) != 1:
            raise InvalidCaseError(f"need exactly one slack bus, found {len(slack)}")
        return cls(
            base_mva=float(base_mva),
            buses=tuple(buses),
            branches=tuple(branches),
            gens=tuple(gens),
            slack_index=slack[0],
            ders=tuple(ders),
        )

    def bus_index(self, external_id: int) -> int:
        for i, b in enumerate(self.buses):
            if b.id == external_id:
                return i
        raise UnknownBusReference(f"no bus with id {external_id}")

    @property
    def n_der(self) -> int:
        return len(self.ders)

    def der_gen_indices(self) -> tuple[int, ...]:
        """Generator indices of the DER units, in agent-id order."""
        return tuple(d.gen_index for d in self.ders)


# --------------------------------------------------------------------------
# MATPOWER parsing
#
# Honored columns (0-based), everything else ignored:
#   bus:    0 BUS_I, 1 BUS_TYPE, 2 PD, 3 QD, 4 GS, 5 BS, 7 VM
#   gen:    0 GEN_BUS, 1 PG, 3 QMAX, 4 QMIN, 7 GEN_STATUS
#   branch: 0 F_BUS, 1 T_BUS, 2 BR_R, 3 BR_X, 4 BR_B, 8 TAP, 10 BR_STATUS
# --------------------------------------------------------------------------

_MIN_COLS = {"bus": 8, "gen": 8, "branch": 11}


def _read_matrix(text: str, name: str) -> list[list[float]]:
    m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, text, re.S)
    if m is None:
        raise MissingSection(f"mpc.{name} not found")
    rows: list[list[float]] = []
    body = m.group(1).replace(";", "\n")
    for lineno, line in enumerate(body.split("\n"), 1):
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise MalformedMatrix(
                f"mpc.{name} row {lineno}: non-numeric entry in {line!r}"
            ) from None
        rows.append(row)
    if not rows:
        raise MissingSection(f"mpc.{name} is empty")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MalformedMatrix(f"mpc.{name}: rows of unequal length")
    if width < _MIN_COLS[name]:
        raise MalformedMatrix(
            f"mpc.{name}: {width} columns, need at least {_MIN_COLS[name]}"
        )
    return rows


def parse_matpower_case(text: str) -> Network:
    """Parse a MATPOWER case file subset into a Network.

    Out-of-service generators are dropped. GS/BS are converted from MW/MVAr
    at V=1 to per-unit here. Tap 0 means nominal (1.0). Cost data, angle
    limits and ratings are ignored.
    """
    text = re.sub(r"%[^\n]*", "", text)
    m = re.search(r"mpc\.baseMVA\s*=\s*([^;]+);", text)
    if m is None:
        raise MissingSection("mpc.baseMVA not found")
    try:
        base = float(m.group(1).strip())
    except ValueError:
        raise MalformedMatrix(f"baseMVA: non-numeric {m.group(1).strip()!r}") from None

    bus_rows = _read_matrix(text, "bus")
    gen_rows = _read_matrix(text, "gen")
    branch_rows = _read_matrix(text, "branch")

    kind_map = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK}
    buses: list[Bus] = []
    ext2int: dict[int, int] = {}
    for row in bus_rows:
        ext = int(row[0])
        if ext in ext2int:
            raise DuplicateBusId(f"duplicate bus id {ext}")
        btype = int(row[1])
        if btype not in kind_map:
            raise MalformedMatrix(f"bus {ext}: unsupported bus type {btype}")
        vm = row[7]
        buses.append(
            Bus(
                id=ext,
                kind=kind_map[btype],
                p_load=row[2],
                q_load=row[3],
                shunt_g=row[4] / base,
                shunt_b=row[5] / base,
                v_set=vm if vm > 0 else 1.0,
            )
        )
        ext2int[ext] = len(buses) - 1

    gens: list[Generator] = []
    for row in gen_rows:
        if row[7] <= 0:  # GEN_STATUS
            continue
        ext = int(row[0])
        if ext not in ext2int:
            raise UnknownBusReference(f"gen references unknown bus {ext}")
        gens.append(Generator(bus=ext2int[ext], p_out=row[1], q_min=row[4], q_max=row[3]))

    branches: list[Branch] = []
    for row in branch_rows:
        f_ext, t_ext = int(row[0]), int(row[1])
        for ext in (f_ext, t_ext):
            if ext not in ext2int:
                raise UnknownBusReference(f"branch references unknown bus {ext}")
        tap = row[8]
        branches.append(
            Branch(
                from_bus=ext2int[f_ext],
                to_bus=ext2int[t_ext],
                r=row[2],
                x=row[3],
                b_charging=row[4],
                tap=tap if tap != 0 else 1.0,
                status=row[10] != 0,
            )
        )

    return Network.assemble(base, buses, branches, gens)


# --------------------------------------------------------------------------
# Native format (TOML): sections [system], [[bus]], [[branch]], [[gen]],
# [[der]]. Branch endpoints and generator buses use EXTERNAL bus ids;
# der.gen is the 0-based index into the gen list.
# --------------------------------------------------------------------------


def _field(tbl: dict, ctx: str, key: str, types, required=True, default=None):
    if key not in tbl:
        if required:
            raise InvalidCaseError(f"{ctx}: missing field {key!r}")
        return default
    v = tbl[key]
    if isinstance(v, bool) and bool not in types:
        raise InvalidCaseError(f"{ctx}.{key}: expected {types}, got bool")
    if not isinstance(v, tuple(types)):
        raise InvalidCaseError(f"{ctx}.{key}: expected {types}, got {type(v).__name__}")
    return v


def _num(tbl, ctx, key, required=True, default=0.0):
    v = _field(tbl, ctx, key, (int, float), required, default)
    return float(v)


def parse_native_case(text: str) -> Network:
    """Parse the native TOML case format into a Network."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise MalformedMatrix(f"TOML syntax error: {e}") from None

    if "system" not in data or not isinstance(data["system"], dict):
        raise MissingSection("missing [system] section")
    base = _num(data["system"], "system", "base_mva")

    if "bus" not in data or not isinstance(data["bus"], list) or not data["bus"]:
        raise MissingSection("missing [[bus]] entries")

    buses: list[Bus] = []
    ext2int: dict[int, int] = {}
    for i, tbl in enumerate(data["bus"]):
        ctx = f"bus[{i}]"
        ext = _field(tbl, ctx, "id", (int,))
        kind_s = _field(tbl, ctx, "kind", (str,))
        if kind_s not in BusKind.__members__:
            raise InvalidCaseError(f"{ctx}.kind: unknown kind {kind_s!r}")
        if ext in ext2int:
            raise DuplicateBusId(f"{ctx}: duplicate bus id {ext}")
        buses.append(
            Bus(
                id=ext,
                kind=BusKind[kind_s],
                p_load=_num(tbl, ctx, "p_load", required=False),
                q_load=_num(tbl, ctx, "q_load", required=False),
                v_set=_num(tbl, ctx, "v_set", required=False, default=1.0),
                shunt_g=_num(tbl, ctx, "shunt_g", required=False),
                shunt_b=_num(tbl, ctx, "shunt_b", required=False),
            )
        )
        ext2int[ext] = i

    def resolve(ctx: str, ext: int) -> int:
        if ext not in ext2int:
            raise UnknownBusReference(f"{ctx}: unknown bus id {ext}")
        return ext2int[ext]

    branches: list[Branch] = []
    for i, tbl in enumerate(data.get("branch", [])):
        ctx = f"branch[{i}]"
        branches.append(
            Branch(
                from_bus=resolve(ctx, _field(tbl, ctx, "from", (int,))),
                to_bus=resolve(ctx, _field(tbl, ctx, "to", (int,))),
                r=_num(tbl, ctx, "r"),
                x=_num(tbl, ctx, "x"),
                b_charging=_num(tbl, ctx, "b", required=False),
                tap=_num(tbl, ctx, "tap", required=False, default=1.0),
                status=bool(_field(tbl, ctx, "status", (bool, int), False, True)),
            )
        )

    gens: list[Generator] = []
    for i, tbl in enumerate(data.get("gen", [])):
        ctx = f"gen[{i}]"
        gens.append(
            Generator(
                bus=resolve(ctx, _field(tbl, ctx, "bus", (int,))),
                p_out=_num(tbl, ctx, "p_out"),
                q_min=_num(tbl, ctx, "q_min", required=False),
                q_max=_num(tbl, ctx, "q_max", required=False),
            )
        )

    ders: list[DerSpec] = []
    for i, tbl in enumerate(data.get("der", [])):
        ctx = f"der[{i}]"
        kind = _field(tbl, ctx, "kind", (str,))
        spec = DerSpec(
            gen_index=_field(tbl, ctx, "gen", (int,)),
            group=_field(tbl, ctx, "group", (str,)),
            kind=kind,
            xi=_num(tbl, ctx, "xi", required=(kind in ("TYPE1", "TYPE2"))),
            x0=_num(tbl, ctx, "x0", required=(kind in ("TYPE1", "TYPE2"))),
            value=_num(tbl, ctx, "value", required=(kind == "CONSTANT")),
        )
        ders.append(spec)

    return Network.assemble(base, buses, branches, gens, ders)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def serialize_native_case(net: Network) -> str:
    """Emit the native TOML format. Deterministic and round-trip exact:
    parse_native_case(serialize_native_case(net)) == net."""
    out: list[str] = []
    out.append("[system]")
    out.append(f"base_mva = {_fmt(net.base_mva)}")
    for bus in net.buses:
        out.append("")
        out.append("[[bus]]")
        out.append(f"id = {bus.id}")
        out.append(f'kind = "{bus.kind.value}"')
        out.append(f"p_load = {_fmt(bus.p_load)}")
        out.append(f"q_load = {_fmt(bus.q_load)}")
        out.append(f"v_set = {_fmt(bus.v_set)}")
        out.append(f"shunt_g = {_fmt(bus.shunt_g)}")
        out.append(f"shunt_b = {_fmt(bus.shunt_b)}")
    for br in net.branches:
        out.append("")
        out.append("[[branch]]")
        out.append(f"from = {net.buses[br.from_bus].id}")
        out.append(f"to = {net.buses[br.to_bus].id}")
        out.append(f"r = {_fmt(br.r)}")
        out.append(f"x = {_fmt(br.x)}")
        out.append(f"b = {_fmt(br.b_charging)}")
        out.append(f"tap = {_fmt(br.tap)}")
        out.append(f"status = {_fmt(br.status)}")
    for g in net.gens:
        out.append("")
        out.append("[[gen]]")
        out.append(f"bus = {net.buses[g.bus].id}")
        out.append(f"p_out = {_fmt(g.p_out)}")
        out.append(f"q_min = {_fmt(g.q_min)}")
        out.append(f"q_max = {_fmt(g.q_max)}")
    for d in net.ders:
        out.append("")
        out.append("[[der]]")
        out.append(f"gen = {d.gen_index}")
        out.append(f'group = "{d.group}"')
        out.append(f'kind = "{d.kind}"')
        if d.kind == "CONSTANT":
            out.append(f"value = {_fmt(d.value)}")
        else:
            out.append(f"xi = {_fmt(d.xi)}")
            out.append(f"x0 = {_fmt(d.x0)}")
    out.append("")
    return "\n".join(out)


def serialize_matpower_case(net: Network) -> str:
    """Emit a MATPOWER case. DER annotations have no MATPOWER home and are
    dropped (a comment in the output says so)."""
    out = ["function mpc = case", "mpc.version = '2';", ""]
    out.append(f"mpc.baseMVA = {_fmt(net.base_mva)};")
    kind_code = {BusKind.PQ: 1, BusKind.PV: 2, BusKind.SLACK: 3}
    out.append("")
    out.append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    out.append("mpc.bus = [")
    for b in net.buses:
        out.append(
            "\t%d\t%d\t%s\t%s\t%s\t%s\t1\t%s\t0\t0\t1\t1.06\t0.94;"
            % (
                b.id,
                kind_code[b.kind],
                _fmt(b.p_load),
                _fmt(b.q_load),
                _fmt(b.shunt_g * net.base_mva),
                _fmt(b.shunt_b * net.base_mva),
                _fmt(b.v_set),
            )
        )
    out.append("];")
    out.append("")
    if net.ders:
        out.append("% note: DER annotations from the source case are not representable")
        out.append("% in this format and were dropped.")
    out.append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin")
    out.append("mpc.gen = [")
    for g in net.gens:
        out.append(
            "\t%d\t%s\t0\t%s\t%s\t%s\t%s\t1\t0\t0;"
            % (
                net.buses[g.bus].id,
                _fmt(g.p_out),
                _fmt(g.q_max),
                _fmt(g.q_min),
                _fmt(net.buses[g.bus].v_set),
                _fmt(net.base_mva),
            )
        )
    out.append("];")
    out.append("")
    out.append("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus")
    out.append("mpc.branch = [")
    for br in net.branches:
        out.append(
            "\t%d\t%d\t%s\t%s\t%s\t0\t0\t0\t%s\t0\t%d;"
            % (
                net.buses[br.from_bus].id,
                net.buses[br.to_bus].id,
                _fmt(br.r),
                _fmt(br.x),
                _fmt(br.b_charging),
                _fmt(br.tap),
                1 if br.status else 0,
            )
        )
    out.append("];")
    out.append("")
    return "\n".join(out)


def apply_der_sidecar(net: Network, text: str) -> Network:
    """Apply a DER substitution sidecar (TOML) to a parsed case.

    Each [[substitute]] block names an external bus id; all existing
    generators at that bus are removed, the bus becomes PQ (DERs inject
    constant P, no voltage control), and the listed DER units are added.
    Existing der annotations on untouched generators are preserved.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise MalformedMatrix(f"TOML syntax error in sidecar: {e}") from None
    subs = data.get("substitute")
    if not isinstance(subs, list) or not subs:
        raise MissingSection("sidecar has no [[substitute]] entries")

    buses = list(net.buses)
    drop_bus_idx: set[int] = set()
    new_units: list[tuple[int, Generator, DerSpec]] = []  # (bus idx, gen, spec proto)
    for i, sub in enumerate(subs):
        ctx = f"substitute[{i}]"
        ext = _field(sub, ctx, "bus", (int,))
        bi = net.bus_index(ext)
        if bi == net.slack_index:
            raise InvalidCaseError(f"{ctx}: cannot substitute DERs at the slack bus")
        drop_bus_idx.add(bi)
        if buses[bi].kind is not BusKind.PQ:
            buses[bi] = replace(buses[bi], kind=BusKind.PQ)
        units = sub.get("der")
        if not isinstance(units, list) or not units:
            raise InvalidCaseError(f"{ctx}: no [[substitute.der]] entries")
        for j, u in enumerate(units):
            uctx = f"{ctx}.der[{j}]"
            count = _field(u, uctx, "count", (int,), required=False, default=1)
            if count < 1:
                raise InvalidCaseError(f"{uctx}: count must be >= 1")
            kind = _field(u, uctx, "kind", (str,))
            for _ in range(count):
                gen = Generator(
                    bus=bi,
                    p_out=_num(u, uctx, "p_out"),
                    q_min=_num(u, uctx, "q_min", required=False),
                    q_max=_num(u, uctx, "q_max", required=False),
                )
                spec = DerSpec(
                    gen_index=-1,  # fixed up below
                    group=_field(u, uctx, "group", (str,)),
                    kind=kind,
                    xi=_num(u, uctx, "xi", required=(kind in ("TYPE1", "TYPE2"))),
                    x0=_num(u, uctx, "x0", required=(kind in ("TYPE1", "TYPE2"))),
                    value=_num(u, uctx, "value", required=(kind == "CONSTANT")),
                )
                new_units.append((bi, gen, spec))

    # Rebuild the generator list; surviving der annotations are remapped.
    old_spec_by_gen = {d.gen_index: d for d in net.ders}
    gens: list[Generator] = []
    ders: list[DerSpec] = []
    for gi, g in enumerate(net.gens):
        if g.bus in drop_bus_idx:
            continue
        if gi in old_spec_by_gen:
            ders.append(replace(old_spec_by_gen[gi], gen_index=len(gens)))
        gens.append(replace(g, is_der=False, agent_id=None))
    for _, gen, spec in new_units:
        ders.append(replace(spec, gen_index=len(gens)))
        gens.append(gen)

    return Network.assemble(net.base_mva, buses, net.branches, gens, ders)

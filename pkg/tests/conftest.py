"""Shared fixtures: bundled preset paths and small hand-built networks."""

from pathlib import Path

import pytest

import derloop
from derloop.casefmt import (
    Branch,
    Bus,
    BusKind,
    Generator,
    Network,
    apply_der_sidecar,
    parse_matpower_case,
    parse_native_case,
)

PRESET_DIR = Path(derloop.__file__).parent / "presets"


def preset(name: str) -> Path:
    return PRESET_DIR / name


def two_bus(r=0.0, x=0.1, p_load=100.0, q_load=0.0) -> Network:
    """Slack feeding one PQ load over a single line. base 100 MVA."""
    return Network(
        base_mva=100.0,
        buses=(
            Bus(id=1, kind=BusKind.SLACK, v_set=1.0),
            Bus(id=2, kind=BusKind.PQ, p_load=p_load, q_load=q_load),
        ),
        branches=(Branch(from_bus=0, to_bus=1, r=r, x=x),),
        gens=(Generator(bus=0, p_out=0.0, q_min=-9999.0, q_max=9999.0),),
        slack_index=0,
    )


def three_bus_mixed() -> Network:
    """Slack + PV + PQ with an off-nominal tap, line charging, and a shunt.

    Exists to exercise every Ybus term at once on a size the Gauss-Seidel
    oracle can still grind through.
    """
    return Network(
        base_mva=100.0,
        buses=(
            Bus(id=1, kind=BusKind.SLACK, v_set=1.02),
            Bus(id=2, kind=BusKind.PV, p_load=20.0, v_set=1.01),
            Bus(id=3, kind=BusKind.PQ, p_load=90.0, q_load=30.0, shunt_b=5.0),
        ),
        branches=(
            Branch(from_bus=0, to_bus=1, r=0.01, x=0.06, b_charging=0.04, tap=0.98),
            Branch(from_bus=1, to_bus=2, r=0.02, x=0.10, b_charging=0.02),
            Branch(from_bus=0, to_bus=2, r=0.015, x=0.08),
        ),
        gens=(
            Generator(bus=0, p_out=0.0, q_min=-9999.0, q_max=9999.0),
            Generator(bus=1, p_out=60.0, q_min=-9999.0, q_max=9999.0),
        ),
        slack_index=0,
    )


@pytest.fixture(scope="session")
def serial_net() -> Network:
    return parse_native_case(preset("serial.case").read_text())


@pytest.fixture(scope="session")
def bus3_net() -> Network:
    return parse_native_case(preset("bus3.case").read_text())


@pytest.fixture(scope="session")
def case118_net() -> Network:
    net = parse_matpower_case(preset("case118.m").read_text())
    return apply_der_sidecar(net, preset("case118_der.toml").read_text())

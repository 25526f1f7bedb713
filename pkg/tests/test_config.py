import math

import pytest
from hypothesis import given, strategies as st

from superconv import MissingRequired, PotentialSpec, SolverOptions, StudyConfig, TypeMismatch, UnknownKey, parse_config, render_config
from superconv.config import LineError, parse_potential, render_potential
from superconv.lab import ConfigError

MINIMAL = """\
[problem]
kind = eig
V = const:10

[space]
basis = fourier

[sweep]
N = [8, 16, 32, 64]
ref = 512
"""


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "eig" and cfg.family.value == "fourier"
    assert cfg.sizes == (8, 16, 32, 64) and len(cfg.sizes) == 4
    assert cfg.reference == 512 and cfg.V == PotentialSpec.const(10)


def test_misspelled_key():
    with pytest.raises(UnknownKey) as err:
        parse_config(MINIMAL.replace("basis =", "basys ="))
    assert err.value.line == 6 and "line 6" in str(err.value)


def test_too_few_cases():
    with pytest.raises(MissingRequired, match="at least 4") as err:
        parse_config(MINIMAL.replace("[8, 16, 32, 64]", "[8, 16]"))
    assert err.value.line == 9


def test_type_mismatch():
    with pytest.raises(TypeMismatch) as err:
        parse_config(MINIMAL.replace("ref = 512", "ref = lots"))
    assert err.value.line == 10
    with pytest.raises(TypeMismatch):
        parse_config(MINIMAL.replace("const:10", "wobbly:10"))
    with pytest.raises(TypeMismatch):
        parse_config(MINIMAL.replace("kind = eig", "kind = wave"))


def test_missing_required():
    with pytest.raises(MissingRequired, match="ref"):
        parse_config(MINIMAL.replace("ref = 512\n", ""))
    with pytest.raises(MissingRequired, match=" f") as err:
        parse_config(MINIMAL.replace("kind = eig", "kind = src"))
    assert err.value.line == 2


def test_unknown_section_and_stray_key():
    with pytest.raises(UnknownKey):
        parse_config("[extras]\nx = 1\n" + MINIMAL)
    with pytest.raises(UnknownKey) as err:
        parse_config("x = 1\n" + MINIMAL)
    assert err.value.line == 1


def test_duplicate_and_invariant_errors():
    with pytest.raises(LineError, match="duplicate"):
        parse_config(MINIMAL + "[sweep]\nref = 1024\n")
    with pytest.raises(ConfigError, match="8x"):
        parse_config(MINIMAL.replace("ref = 512", "ref = 256"))


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\n" + MINIMAL.replace("ref = 512", "ref = 512  # reference"))
    assert cfg.reference == 512


def test_custom_data_not_renderable():
    with pytest.raises(ConfigError):
        render_potential(PotentialSpec.custom(abs))


potentials = st.one_of(
    st.floats(0.1, 100).map(PotentialSpec.const),
    st.builds(PotentialSpec.trig_decay, st.floats(0.5, 5), st.integers(1, 4096), st.floats(0.1, 10)),
    st.lists(st.floats(-5, 5), min_size=1, max_size=5).map(PotentialSpec.polynomial),
    st.builds(PotentialSpec.abs_power, st.floats(0.5, 4), st.floats(0, 3)),
    st.dictionaries(st.integers(0, 20), st.floats(-3, 3), min_size=1, max_size=4).map(PotentialSpec.cosine),
)


@given(potentials)
def test_potential_round_trip(p):
    assert parse_potential(render_potential(p)) == p


@st.composite
def configs(draw):
    family = draw(st.sampled_from(["fourier", "legendre", "fem"]))
    kind = draw(st.sampled_from(["src", "eig"]))
    start = draw(st.integers(2, 8))
    n = draw(st.integers(4, 7))
    sizes = tuple(start * 2**i for i in range(n))
    ref = sizes[-1] * 2 ** draw(st.integers(3, 5))
    return StudyConfig(
        kind=kind,
        family=family,
        sizes=sizes,
        reference=ref,
        V=draw(potentials),
        f=draw(potentials) if kind == "src" else None,
        degree=draw(st.integers(1, 3)) if family == "fem" else 1,
        cubic_on=draw(st.booleans()),
        solver=SolverOptions(draw(st.floats(1e-14, 1e-6)), draw(st.integers(1, 500)), "armijo", draw(st.sampled_from(["sobolev", "scf"]))),
        oversample=draw(st.integers(1, 3)),
        regularity=draw(st.one_of(st.just(math.inf), st.floats(1.5, 6))),
        t=draw(st.floats(0, 1.4)),
        tolerance=draw(st.one_of(st.none(), st.floats(0.01, 1))),
        out_dir=draw(st.sampled_from(["results", "out/a b", "x"])),
    )


@given(configs())
def test_config_round_trip(cfg):
    assert parse_config(render_config(cfg)) == cfg

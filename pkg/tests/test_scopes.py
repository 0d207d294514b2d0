import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridtokens.profile import (
    DownscopeRefused,
    MalformedPath,
    Scope,
    ScopeError,
    UnknownAuthz,
    downscope,
    parse_scope,
    subsumes,
)
from strategies import narrow_scopes, oracle_covered, scopes, segment_oracle


def test_parse_storage_with_path():
    assert parse_scope("storage.read:/dune/data") == Scope("storage.read", "/dune/data")


def test_parse_compute_create():
    s = parse_scope("compute.create")
    assert s.authz == "compute.create" and s.path is None


@pytest.mark.parametrize(
    "text,exc",
    [
        ("storage.read:relative/path", MalformedPath),
        ("storage.read:/a//b", MalformedPath),
        ("storage.read:/a/../b", MalformedPath),
        ("storage.read:/a/./b", MalformedPath),
        ("storage.read:/a/", MalformedPath),
        ("compute.create:/x", MalformedPath),
        ("storage.stage:/x", UnknownAuthz),
        ("openid", UnknownAuthz),
        ("", ScopeError),
    ],
)
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_scope(text)


def test_root_path_is_valid():
    assert str(parse_scope("storage.read:/")) == "storage.read:/"


@given(scopes)
def test_str_round_trip(s):
    assert parse_scope(str(s)) == s


@pytest.mark.parametrize(
    "granted,requested",
    [
        ("storage.read:/dune", "storage.read:/dune/raw/run1"),
        ("storage.read:/dune", "storage.read:/dunesw"),
        ("storage.read:/a", "storage.read:/ab"),
        ("storage.read:/a", "storage.read:/a/b"),
        ("storage.read:/", "storage.read:/gm2"),
        ("storage.read:/dune", "storage.create:/dune"),
        ("storage.read", "storage.read:/dune"),
        ("compute.create", "compute.create"),
        ("compute.read", "compute.create"),
    ],
)
def test_subsumes_examples_match_oracle(granted, requested):
    g, r = parse_scope(granted), parse_scope(requested)
    assert subsumes(g, r) == segment_oracle(g, r)


def test_subsumes_frozen_examples():
    # values computed with segment_oracle
    assert subsumes(parse_scope("storage.read:/dune"), parse_scope("storage.read:/dune/raw/run1")) is True
    assert subsumes(parse_scope("storage.read:/dune"), parse_scope("storage.read:/dunesw")) is False
    assert subsumes(parse_scope("storage.read:/a"), parse_scope("storage.read:/ab")) is False


@given(scopes)
def test_subsumes_reflexive(x):
    assert subsumes(x, x)


@given(scopes, scopes)
def test_subsumes_agrees_with_oracle(a, b):
    assert subsumes(a, b) == segment_oracle(a, b)


@given(narrow_scopes, narrow_scopes, narrow_scopes)
def test_subsumes_transitive(a, b, c):
    if subsumes(a, b) and subsumes(b, c):
        assert subsumes(a, c)


def test_downscope_examples():
    granted = {parse_scope("storage.read:/"), parse_scope("compute.create")}
    assert set(downscope(granted, {parse_scope("storage.read:/gm2")})) == {parse_scope("storage.read:/gm2")}
    assert set(downscope(granted, set())) == granted
    with pytest.raises(DownscopeRefused) as info:
        downscope({parse_scope("compute.read")}, {parse_scope("compute.create")})
    assert info.value.scope == parse_scope("compute.create")
    assert "compute.create" in str(info.value)


@settings(max_examples=300)
@given(st.sets(narrow_scopes, max_size=4), st.sets(narrow_scopes, max_size=4))
def test_downscope_sound(granted, requested):
    if all(oracle_covered(granted, r) for r in requested):
        out = downscope(granted, requested)
        for s in out:
            assert oracle_covered(granted, s)
    else:
        with pytest.raises(DownscopeRefused) as info:
            downscope(granted, requested)
        assert not oracle_covered(granted, info.value.scope)


@given(st.lists(scopes, max_size=8))
def test_scopes_sort_totally(items):
    ordered = sorted(items)
    assert all(not (b < a) for a, b in zip(ordered, ordered[1:]))
    assert sorted(reversed(items)) == ordered

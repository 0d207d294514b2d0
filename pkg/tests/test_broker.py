import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridtokens.broker import (
    AssertionRejected,
    BootstrapRequired,
    ChangeReport,
    ConfigError,
    Conflict,
    ConsentDenied,
    DownscopeRefused,
    IssuerUnreachable,
    NotFound,
    RateLimited,
    SealedStore,
    SecondaryKey,
    SessionExpired,
    SlidingWindowLimiter,
    StaleAssertion,
    TokenExpired,
    TokenUnknown,
    Unauthorized,
    dump,
    normalize,
    verify_assertion,
)
from gridtokens.lifetimes import DAY
from gridtokens.profile import VerifyPolicy, parse_scope, verify
from harness import ADMIN, Stack


@pytest.fixture
def stack(tmp_path, clock):
    return Stack(tmp_path, clock)


# -- config ------------------------------------------------------------------


def test_normalize_fills_defaults(stack):
    cfg = normalize(stack.broker_doc)
    gm2 = cfg.experiment("gm2")
    assert gm2["issuer"] == "fermilab" and gm2["realm"] == "gm2" and gm2["rate_limit"] == 60
    assert gm2["issuer_url"] == "https://issuer.test/fermilab"
    assert len(cfg.experiments) == 30


def test_yaml_round_trip_is_not_a_change(stack):
    assert normalize(dump(stack.broker_doc)).canonical() == normalize(stack.broker_doc).canonical()


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["experiments"]["dune"].update(issuer_url="not a url"),
        lambda d: d["experiments"]["dune"].update(roles=[]),
        lambda d: d["experiments"]["dune"].update(rate_limit=0),
        lambda d: d["experiments"]["dune"].pop("client_secret"),
        lambda d: d["experiments"]["dune"].update(secondary_keys={"x": "nope"}),
        lambda d: d.update(ha={"servers": ["a", "b"]}),
        lambda d: d.update(ha={"servers": ["a", "a", "b"]}),
        lambda d: d.update(lifetimes={"access": 10800, "broker": 3600, "refresh": 2419200}),
        lambda d: d.update(bogus=1),
    ],
)
def test_invalid_configs_rejected(stack, mutate):
    doc = copy.deepcopy(stack.broker_doc)
    mutate(doc)
    with pytest.raises(ConfigError):
        normalize(doc)


def test_ha_stanza_validated(stack):
    doc = {**stack.broker_doc, "ha": {"servers": ["v1", "v2", "v3"]}}
    assert normalize(doc).data["ha"]["servers"] == ["v1", "v2", "v3"]


def test_unparseable_yaml():
    with pytest.raises(ConfigError):
        normalize("experiments: [unclosed")


def test_apply_identical_is_empty(stack):
    report = stack.broker.apply_config(stack.broker_doc)
    assert report == ChangeReport() and not report


def test_apply_add_experiment(stack):
    stack.bootstrap()
    before = (stack.tmp / "broker.sealed").read_bytes()
    doc = copy.deepcopy(stack.broker_doc)
    doc["experiments"]["newexp"] = {**doc["experiments"]["gm2"], "realm": "newexp"}
    report = stack.broker.apply_config(doc)
    assert report.added == ("experiments/newexp",) and not report.removed and not report.modified
    assert (stack.tmp / "broker.sealed").read_bytes() == before
    assert stack.broker.apply_config(doc) == ChangeReport()


def test_apply_remove_experiment_drops_records(stack):
    boot = stack.bootstrap()
    doc = copy.deepcopy(stack.broker_doc)
    del doc["experiments"]["dune"]
    report = stack.broker.apply_config(doc)
    assert report.removed == ("experiments/dune",)
    assert not any(k.startswith("dune/") for k in stack.broker.store.data["records"])
    with pytest.raises(TokenUnknown):
        stack.broker.exchange(boot["broker_token"])


def test_apply_invalid_keeps_old_config(stack):
    boot = stack.bootstrap()
    with pytest.raises(ConfigError):
        stack.broker.apply_config({"experiments": {"dune": {"issuer_url": "x"}}})
    assert stack.broker.exchange(boot["broker_token"])["access_token"]
    assert len(stack.broker.config.experiments) == 30


def test_apply_modified_experiment(stack):
    doc = copy.deepcopy(stack.broker_doc)
    doc["experiments"]["dune"]["rate_limit"] = 5
    assert stack.broker.apply_config(doc).modified == ("experiments/dune",)


# -- rate limiter ---------------------------------------------------------------


def test_limiter_window():
    lim = SlidingWindowLimiter(60)
    for i in range(60):
        assert lim.acquire("k", 60, 1000 + i * 0.5)[0]
    ok, retry = lim.acquire("k", 60, 1030)
    assert not ok and retry == 30
    assert lim.acquire("k", 60, 1060)[0]
    assert lim.acquire("other", 60, 1030)[0]


@settings(max_examples=60)
@given(st.lists(st.integers(0, 300), min_size=1, max_size=200), st.integers(1, 10))
def test_limiter_bound_holds_in_every_window(times, limit):
    lim = SlidingWindowLimiter(60)
    granted = [t for t in sorted(times) if lim.acquire("p", limit, t)[0]]
    for start in range(-60, 301):
        assert sum(1 for t in granted if start < t <= start + 60) <= limit


# -- secondary assertions -------------------------------------------------------------


def test_assertion_round_trip():
    key = SecondaryKey.generate()
    a = key.assertion("alice", "dune", 1000)
    assert verify_assertion(a, key.public_b64(), "dune", 1200) == "alice"
    with pytest.raises(StaleAssertion):
        verify_assertion(a, key.public_b64(), "dune", 1000 + 600)
    with pytest.raises(AssertionRejected):
        verify_assertion(a, key.public_b64(), "gm2", 1000)
    with pytest.raises(AssertionRejected):
        verify_assertion(a, SecondaryKey.generate().public_b64(), "dune", 1000)
    forged = {**a, "principal": "bob"}
    with pytest.raises(AssertionRejected):
        verify_assertion(forged, key.public_b64(), "dune", 1000)


def test_key_save_load(tmp_path):
    key = SecondaryKey.generate()
    path = key.save(tmp_path / "k.pem")
    assert oct(path.stat().st_mode & 0o777) == "0o600"
    assert SecondaryKey.load(path).public_b64() == key.public_b64()


# -- sealed store --------------------------------------------------------------------


def test_sealed_store(tmp_path):
    key = SealedStore.generate_key()
    s = SealedStore(tmp_path / "s", key)
    s.data["records"]["a/b/c"] = {"refresh_handle": "SECRET-HANDLE"}
    assert s.commit()
    raw = (tmp_path / "s").read_bytes()
    assert b"SECRET-HANDLE" not in raw
    assert not s.commit()
    assert SealedStore(tmp_path / "s", key).data["records"]["a/b/c"]["refresh_handle"] == "SECRET-HANDLE"
    with pytest.raises(ValueError):
        SealedStore(tmp_path / "s", SealedStore.generate_key())


# -- bootstrap -------------------------------------------------------------------------


def test_begin_url_targets_issuer(stack):
    b = stack.broker_client.begin("alice", "dune", "production")
    assert b["url"].startswith("https://issuer.test/dune/authorize?")
    params = stack.url_params(b["url"])
    assert params["client_id"] == "broker-dune" and params["role"] == "production"
    shared = stack.broker_client.begin("alice", "gm2", "analysis")
    assert shared["url"].startswith("https://issuer.test/fermilab/authorize?")
    assert stack.url_params(shared["url"])["experiment"] == "gm2"


def test_begin_errors(stack):
    with pytest.raises(NotFound):
        stack.broker_client.begin("alice", "nosuch", "production")
    with pytest.raises(NotFound):
        stack.broker_client.begin("alice", "dune", "nosuchrole")


def test_independent_sessions_and_limit(stack):
    a = stack.broker_client.begin("alice", "dune", "production")
    b = stack.broker_client.begin("alice", "dune", "production")
    assert a["handle"] != b["handle"]
    for _ in range(3):
        stack.broker_client.begin("alice", "dune", "production")
    with pytest.raises(RateLimited):
        stack.broker_client.begin("alice", "dune", "production")
    stack.consent(b["url"])
    assert stack.broker_client.poll(a["handle"]) == {"status": "pending"}
    assert stack.broker_client.poll(b["handle"])["status"] == "complete"


def test_poll_flow_and_lifetimes(stack, clock):
    b = stack.broker_client.begin("alice", "dune", "production")
    assert stack.broker_client.poll(b["handle"]) == {"status": "pending"}
    stack.consent(b["url"])
    done = stack.broker_client.poll(b["handle"])
    assert done["broker_token_expires_at"] - clock.now() == 7 * DAY
    claims = verify(done["access_token"], stack.issuer.jwks("dune"), VerifyPolicy(), clock.now())
    assert claims.exp - claims.iat == 10800 and claims.sub == "alice"
    # handle consumed by the single poller
    with pytest.raises(NotFound):
        stack.broker_client.poll(b["handle"])


def test_poll_response_has_no_refresh_handle(stack):
    stack.network.captures.clear()
    stack.bootstrap()
    handles = stack.issuer.issued_handles()
    assert handles
    broker_bodies = [body for host, _, body in stack.network.captures if host == "broker.test"]
    assert broker_bodies
    for body in broker_bodies:
        for h in handles:
            assert h.encode() not in body


def test_consent_denied(stack):
    b = stack.broker_client.begin("alice", "dune", "production")
    page = stack.consent(b["url"], approve=False)
    assert page.status_code == 200
    with pytest.raises(ConsentDenied):
        stack.broker_client.poll(b["handle"])


def test_session_expiry(stack, clock):
    b = stack.broker_client.begin("alice", "dune", "production")
    clock.advance(901)
    with pytest.raises(SessionExpired):
        stack.broker_client.poll(b["handle"])


def test_principal_mismatch(stack):
    b = stack.broker_client.begin("alice", "gm2", "production")
    stack.consent(b["url"], user="carol")
    with pytest.raises(AssertionRejected) as info:
        stack.broker_client.poll(b["handle"])
    assert info.value.code == "principal_mismatch"


# -- renew ----------------------------------------------------------------------------


def test_renew_after_eight_days(stack, clock):
    stack.bootstrap()
    clock.advance(8 * DAY)
    a = stack.user_keys["alice"].assertion("alice", "dune", clock.now())
    tok = stack.broker_client.renew(a, "dune", "production")
    assert tok["broker_token_expires_at"] - clock.now() == 7 * DAY
    assert stack.broker_client.exchange(tok["broker_token"])["access_token"]


def test_renew_stale_timestamp(stack, clock):
    stack.bootstrap()
    a = stack.user_keys["alice"].assertion("alice", "dune", clock.now() - 600)
    with pytest.raises(StaleAssertion):
        stack.broker_client.renew(a, "dune", "production")


def test_renew_without_record(stack, clock):
    a = stack.user_keys["alice"].assertion("alice", "dune", clock.now())
    with pytest.raises(BootstrapRequired):
        stack.broker_client.renew(a, "dune", "production")


def test_renew_unenrolled_principal(stack, clock):
    a = SecondaryKey.generate().assertion("bob", "dune", clock.now())
    with pytest.raises(AssertionRejected):
        stack.broker_client.renew(a, "dune", "production")


def test_renew_after_refresh_expiry(stack, clock):
    stack.bootstrap()
    clock.advance(29 * DAY)
    a = stack.user_keys["alice"].assertion("alice", "dune", clock.now())
    with pytest.raises(BootstrapRequired):
        stack.broker_client.renew(a, "dune", "production")


def test_weekly_renewal_keeps_refresh_alive(stack, clock):
    boot = stack.bootstrap()
    tok = boot["broker_token"]
    for _ in range(20):
        clock.advance(6 * DAY)
        stack.broker_client.exchange(tok)
        a = stack.user_keys["alice"].assertion("alice", "dune", clock.now())
        tok = stack.broker_client.renew(a, "dune", "production")["broker_token"]
    assert stack.broker_client.exchange(tok)["access_token"]


# -- exchange -------------------------------------------------------------------------


def test_exchange_default_lifetime(stack, clock):
    tok = stack.bootstrap()["broker_token"]
    resp = stack.broker_client.exchange(tok)
    claims = verify(resp["access_token"], stack.issuer.jwks("dune"), VerifyPolicy(), clock.now())
    assert claims.exp - claims.iat == 10800
    assert resp["expires_at"] == claims.exp


def test_exchange_downscope(stack, clock):
    tok = stack.bootstrap()["broker_token"]
    resp = stack.broker_client.exchange(tok, scopes=["storage.read:/dune/raw"], audience="https://fndca.test")
    claims = verify(resp["access_token"], stack.issuer.jwks("dune"), VerifyPolicy(), clock.now())
    assert claims.scope == (parse_scope("storage.read:/dune/raw"),)
    assert claims.aud == ("https://fndca.test",)
    with pytest.raises(DownscopeRefused):
        stack.broker_client.exchange(tok, scopes=["storage.read:/gm2"])
    with pytest.raises(DownscopeRefused):
        stack.broker_client.exchange(tok, scopes=["storage.read:relative"])


def test_exchange_expired_and_unknown(stack, clock):
    tok = stack.bootstrap()["broker_token"]
    with pytest.raises(TokenUnknown):
        stack.broker_client.exchange("not-a-token")
    clock.advance(7 * DAY)
    with pytest.raises(TokenExpired) as info:
        stack.broker_client.exchange(tok)
    assert info.value.code != TokenUnknown.code


def test_rate_limit(stack, clock):
    tok = stack.bootstrap()["broker_token"]
    for _ in range(60):
        stack.broker_client.exchange(tok)
    with pytest.raises(RateLimited) as info:
        stack.broker_client.exchange(tok)
    assert 0 < info.value.retry_after <= 60
    clock.advance(60)
    assert stack.broker_client.exchange(tok)["access_token"]


def test_issuer_unreachable(stack):
    tok = stack.bootstrap()["broker_token"]
    stack.network.down.add("issuer.test")
    with pytest.raises(IssuerUnreachable) as info:
        stack.broker_client.exchange(tok)
    assert info.value.retriable and info.value.status == 503


def test_scope_soundness_random(stack, clock):
    import random

    from strategies import oracle_covered

    rng = random.Random(7)
    tok = stack.bootstrap()["broker_token"]
    granted = stack.issuer.refresh_records()[0].scopes
    pool = ["storage.read:/dune", "storage.read:/dune/raw", "storage.read:/", "storage.read:/gm2",
            "storage.create:/dune/x", "compute.create", "compute.modify", "storage.modify:/dunesw"]
    for _ in range(80):
        clock.advance(2)
        req = [parse_scope(s) for s in rng.sample(pool, rng.randint(0, 3))]
        try:
            resp = stack.broker.exchange(tok, [str(s) for s in req])
        except DownscopeRefused:
            assert not all(oracle_covered(granted, r) for r in req)
            continue
        claims = verify(resp["access_token"], stack.issuer.jwks("dune"), VerifyPolicy(), clock.now())
        assert all(oracle_covered(granted, s) for s in claims.scope)


# -- robots -----------------------------------------------------------------------------


def test_store_for_robot(stack, clock):
    boot = stack.bootstrap("dunepro", "dune", "production")
    key = SecondaryKey.generate()
    with pytest.raises(Unauthorized):
        stack.broker_client.store_robot("wrong", "dunepro", "dune", "production", boot["broker_token"], key.public_b64())
    stack.broker_client.store_robot(ADMIN, "dunepro", "dune", "production", boot["broker_token"], key.public_b64())
    with pytest.raises(Conflict):
        stack.broker_client.store_robot(ADMIN, "dunepro", "dune", "production", boot["broker_token"], key.public_b64())
    clock.advance(8 * DAY)
    renewed = stack.broker_client.renew(key.assertion("dunepro", "dune", clock.now()), "dune", "production")
    resp = stack.broker_client.exchange(renewed["broker_token"])
    claims = verify(resp["access_token"], stack.issuer.jwks("dune"), VerifyPolicy(), clock.now())
    assert claims.sub == "dunepro" and "/dune" in claims.groups


def test_store_for_robot_grant_mismatch(stack):
    boot = stack.bootstrap("alice", "dune", "production")
    with pytest.raises(AssertionRejected):
        stack.broker_client.store_robot(ADMIN, "dunepro", "dune", "production", boot["broker_token"],
                                        SecondaryKey.generate().public_b64())


def test_health_and_admin_reload(stack):
    assert stack.broker_client.health()["experiments"] == 30
    with pytest.raises(Unauthorized):
        stack.broker_client.reload_config("nope", dump(stack.broker_doc))
    assert stack.broker_client.reload_config(ADMIN, dump(stack.broker_doc)) == {"added": [], "removed": [], "modified": []}


def test_restart_from_sealed_store(stack, clock):
    from gridtokens.broker import BrokerService

    tok = stack.bootstrap()["broker_token"]
    again = BrokerService(stack.broker_doc, http=stack.network.client(), clock=clock,
                          store=SealedStore(stack.tmp / "broker.sealed", stack.master_key))
    assert again.exchange(tok)["access_token"]

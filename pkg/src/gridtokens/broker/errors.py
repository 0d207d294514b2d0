class BrokerError(Exception):
    """Broker failure with a machine-readable code, shared by server and client."""

    status = 400
    code = "broker_error"
    retriable = False

    def __init__(self, message: str = "", *, code: str | None = None, status: int | None = None,
                 retry_after: int | None = None, retriable: bool | None = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        if code is not None:
            self.code = code
        if status is not None:
            self.status = status
        if retriable is not None:
            self.retriable = retriable
        self.retry_after = retry_after

    def to_dict(self) -> dict:
        body = {"error": self.code, "message": self.message, "retriable": self.retriable}
        if self.retry_after is not None:
            body["retry_after"] = self.retry_after
        return body


class NotFound(BrokerError):
    status = 404
    code = "not_found"


class BootstrapRequired(BrokerError):
    status = 401
    code = "bootstrap_required"


class TokenExpired(BrokerError):
    status = 401
    code = "token_expired"


class TokenUnknown(BrokerError):
    status = 401
    code = "token_unknown"


class AssertionRejected(BrokerError):
    status = 401
    code = "bad_assertion"


class StaleAssertion(AssertionRejected):
    code = "stale_assertion"


class RateLimited(BrokerError):
    status = 429
    code = "rate_limited"
    retriable = True


class DownscopeRefused(BrokerError):
    status = 400
    code = "downscope_refused"


class IssuerUnreachable(BrokerError):
    status = 503
    code = "issuer_unreachable"
    retriable = True


class Unauthorized(BrokerError):
    status = 401
    code = "unauthorized"


class Conflict(BrokerError):
    status = 409
    code = "duplicate"


class ConfigError(BrokerError, ValueError):
    status = 400
    code = "invalid_config"


class ConsentDenied(BrokerError):
    status = 403
    code = "consent_denied"


class SessionExpired(BrokerError):
    status = 410
    code = "session_expired"


class BrokerUnreachable(BrokerError):
    status = 503
    code = "broker_unreachable"
    retriable = True


ERRORS_BY_CODE = {
    cls.code: cls
    for cls in (
        NotFound, BootstrapRequired, TokenExpired, TokenUnknown, AssertionRejected, StaleAssertion,
        RateLimited, DownscopeRefused, IssuerUnreachable, Unauthorized, Conflict, ConfigError,
        ConsentDenied, SessionExpired, BrokerUnreachable,
    )
}
ERRORS_BY_CODE.update(
    unknown_experiment=NotFound,
    unknown_role=NotFound,
    session_not_found=NotFound,
    too_many_sessions=RateLimited,
    principal_mismatch=AssertionRejected,
    grant_mismatch=AssertionRejected,
    invalid_scope=DownscopeRefused,
)

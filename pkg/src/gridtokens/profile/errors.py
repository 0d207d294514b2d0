"""Error categories raised while parsing scopes and minting/verifying tokens.

Each verification failure has its own class and a stable ``code`` so callers
(resource servers, the registry API) can report the reason without string
matching.
"""


class TokenError(Exception):
    code = "invalid_token"


class ClaimValidationError(TokenError, ValueError):
    code = "invalid_claims"


class MalformedToken(TokenError):
    code = "malformed"


class UnknownKey(TokenError, KeyError):
    code = "unknown_key"

    def __str__(self):
        return Exception.__str__(self)


class BadSignature(TokenError):
    code = "bad_signature"


class WrongIssuer(TokenError):
    code = "wrong_issuer"


class TokenLifetimeError(TokenError):
    code = "lifetime"


class Expired(TokenLifetimeError):
    code = "expired"


class NotYetValid(TokenLifetimeError):
    code = "not_yet_valid"


class AudienceMismatch(TokenError):
    code = "audience_mismatch"


class InsufficientScope(TokenError):
    code = "insufficient_scope"


class ScopeError(ValueError):
    code = "invalid_scope"


class UnknownAuthz(ScopeError):
    pass


class MalformedPath(ScopeError):
    pass


class DownscopeRefused(ScopeError):
    code = "downscope_refused"

    def __init__(self, scope):
        super().__init__(f"requested scope {scope} is not covered by the granted scopes")
        self.scope = scope

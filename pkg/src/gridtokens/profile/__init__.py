from .errors import (
    AudienceMismatch,
    BadSignature,
    ClaimValidationError,
    DownscopeRefused,
    Expired,
    InsufficientScope,
    MalformedPath,
    MalformedToken,
    NotYetValid,
    ScopeError,
    TokenError,
    TokenLifetimeError,
    UnknownAuthz,
    UnknownKey,
    WrongIssuer,
)
from .keys import KeySet, PublicKey, SigningKey
from .scopes import KNOWN_AUTHZ, Scope, covered, downscope, format_scopes, parse_scope, parse_scopes, subsumes
from .tokens import (
    ANY_AUDIENCE,
    DEFAULT_SKEW,
    PROFILE_VERSION,
    ClaimSet,
    Decision,
    VerifyPolicy,
    check_bearer,
    mint,
    unverified_claims,
    verify,
)

from .app import create_app
from .client import BrokerClient
from .config import BrokerConfig, ChangeReport, broker_document, diff, dump, normalize
from .errors import (
    AssertionRejected,
    BootstrapRequired,
    BrokerError,
    BrokerUnreachable,
    ConfigError,
    Conflict,
    ConsentDenied,
    DownscopeRefused,
    IssuerUnreachable,
    NotFound,
    RateLimited,
    SessionExpired,
    StaleAssertion,
    TokenExpired,
    TokenUnknown,
    Unauthorized,
)
from .ratelimit import SlidingWindowLimiter
from .secondary import SecondaryKey, verify_assertion
from .service import BrokerService, BrokerToken, RecordKey
from .store import SealedStore

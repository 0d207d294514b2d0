"""Credential store that keeps job sandboxes supplied with access tokens."""
from .app import create_app
from .client import CredStoreClient
from .errors import (
    CredStoreError,
    ExchangeFailed,
    InvalidCredential,
    InvalidRegistration,
    NoCredential,
    ScopeRefused,
    StoreUnavailable,
)
from .service import (
    DEFAULT_CYCLE_PERIOD,
    DEFAULT_LEAD,
    FAILED,
    NEEDS_RENEWAL,
    NONE,
    REFRESHED,
    SANDBOX_TOKEN,
    CredStore,
    JobRegistration,
    StoredCredential,
)

from .discovery import DEFAULT_ROLE, BearerLocation, TokenFileLayout, broker_token_name, default_layout, discover_bearer
from .gettoken import (
    EXIT_AUTH_REQUIRED,
    EXIT_DOWNSCOPE_REFUSED,
    EXIT_FILESYSTEM,
    EXIT_NETWORK,
    EXIT_OK,
    AuthRequired,
    ClientError,
    ClientOptions,
    FileWriteError,
    NetworkFailure,
    ScopeRefused,
    TokenResult,
    cached_token_usable,
    get_token,
    write_token_files,
)

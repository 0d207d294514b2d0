from .app import create_app
from .service import (
    GRANT_CODE,
    GRANT_REFRESH,
    GRANT_RENEW,
    AuthCodeRecord,
    ClientRegistration,
    IssuerService,
    OAuthError,
    RefreshTokenRecord,
    UnknownIssuer,
)

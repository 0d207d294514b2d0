class CredStoreError(Exception):
    status = 400
    code = "credstore_error"
    retriable = False

    def __init__(self, message: str = "", *, code: str | None = None, status: int | None = None,
                 retriable: bool | None = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        if code is not None:
            self.code = code
        if status is not None:
            self.status = status
        if retriable is not None:
            self.retriable = retriable

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message, "retriable": self.retriable}


class InvalidCredential(CredStoreError):
    status = 401
    code = "invalid_credential"


class NoCredential(CredStoreError):
    status = 404
    code = "no_credential"


class InvalidRegistration(CredStoreError):
    code = "invalid_registration"


class ExchangeFailed(CredStoreError):
    status = 502
    code = "exchange_failed"
    retriable = True


class ScopeRefused(CredStoreError):
    status = 403
    code = "downscope_refused"


class StoreUnavailable(CredStoreError):
    status = 503
    code = "store_unavailable"
    retriable = True


ERRORS_BY_CODE = {
    cls.code: cls
    for cls in (CredStoreError, InvalidCredential, NoCredential, InvalidRegistration, ExchangeFailed, ScopeRefused,
                StoreUnavailable)
}

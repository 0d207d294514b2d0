from .export import (
    DirectoryDocument,
    GeneratedConfig,
    authorize_api,
    canonical_json,
    client_id_for,
    export_directory,
    generate_configs,
)
from .journal import Registry
from .state import (
    SHARED_ISSUER,
    AddExperiment,
    AddUser,
    AssignRole,
    DanglingReference,
    DeactivateUser,
    DuplicateEntity,
    Experiment,
    RegistryError,
    RegistryState,
    SetRoleScopes,
    User,
    apply_change,
    change_from_dict,
    change_to_dict,
    replay,
)

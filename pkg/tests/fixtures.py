"""Registry fixtures shaped like a lab hosting ~30 experiments."""
from gridtokens.registry import AddExperiment, AddUser, AssignRole, SetRoleScopes

DEDICATED = ["dune", "icarus", "mu2e", "nova", "uboone"]
SHARED = ["gm2", "annie", "cdms", "coupp", "darkside", "emphatic", "genie", "lariat", "minerva", "minos",
          "noble", "numix", "patriot", "redtop", "sbn", "seaquest", "spinquest", "argoneut", "cdf", "d0",
          "des", "holometer", "mars", "lsst", "sbnd"]


def role_scopes(exp, role):
    if role == "production":
        return (
            "compute.create", "compute.read", "compute.modify", "compute.cancel",
            f"storage.read:/{exp}", f"storage.create:/{exp}", f"storage.modify:/{exp}",
        )
    return ("compute.create", "compute.read", "compute.cancel", f"storage.read:/{exp}", f"storage.create:/{exp}/scratch")


def lab_changes(dedicated=DEDICATED, shared=SHARED, users=("alice", "bob", "carol")):
    changes = []
    for name in dedicated:
        changes.append(AddExperiment(name, dedicated_issuer=True))
    for name in shared:
        changes.append(AddExperiment(name))
    for name in [*dedicated, *shared]:
        for role in ("analysis", "production"):
            changes.append(SetRoleScopes(name, role, role_scopes(name, role)))
    for u in users:
        changes.append(AddUser(u, u.title()))
    changes += [
        AssignRole("alice", "dune", "production"),
        AssignRole("alice", "dune", "analysis"),
        AssignRole("alice", "gm2", "analysis"),
        AssignRole("carol", "gm2", "production"),
        AssignRole("carol", "sbnd", "analysis"),
    ]
    # robot principals
    changes += [AddUser("dunepro", "DUNE production robot"), AssignRole("dunepro", "dune", "production")]
    changes += [AddUser("gm2pro", "g-2 production robot"), AssignRole("gm2pro", "gm2", "production")]
    return changes

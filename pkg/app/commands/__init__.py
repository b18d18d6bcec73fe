from .converge import cmd_converge
from .energy_ref import cmd_energy_ref
from .relax import cmd_relax

COMMANDS = {
    "converge": cmd_converge,
    "relax": cmd_relax,
    "energy-ref": cmd_energy_ref,
}

__all__ = ["COMMANDS", "cmd_converge", "cmd_relax", "cmd_energy_ref"]

"""
``asmr <subcommand> [flags]``: the command-line entry point.

Each subcommand is the Django management command of the same name, so
``python manage.py fit ...`` and ``asmr fit ...`` are equivalent. Exit codes:
0 on success, 1 on invalid input or usage, 2 on runtime failure.
"""
import os
import sys
from importlib import import_module

import django
from django.core.management import call_command
from django.core.management.base import CommandError

COMMANDS = {
    "fit": "fit one model to trial data and print per-subject and mean AIC",
    "regret": "print the regret set of a fitted model",
    "run": "run one simulation of the discovery loop",
    "simulate": "run the full experiment grid",
    "synth": "generate synthetic trials and reference likelihoods",
    "report": "re-aggregate an existing run log",
}


def usage() -> str:
    lines = ["usage: asmr <subcommand> [flags]", "", "subcommands:"]
    lines += [f"  {name:<10} {text}" for name, text in COMMANDS.items()]
    lines.append("")
    lines.append("Run `asmr <subcommand> --help` for the flags of a subcommand.")
    return "\n".join(lines) + "\n"


def main(argv=None, stdout=None, stderr=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr

    if argv and argv[0] in ("-h", "--help"):
        stdout.write(usage())
        return 0
    if not argv or argv[0] not in COMMANDS:
        if argv:
            stderr.write(f"Unknown subcommand: {argv[0]}\n")
        stderr.write(usage())
        return 1

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "asmr_service.settings")
    django.setup()

    name, args = argv[0], argv[1:]
    module = import_module(f"discovery.management.commands.{name}")
    command = module.Command(stdout=stdout, stderr=stderr)
    try:
        call_command(command, *args)
    except CommandError as exc:
        stderr.write(f"{exc}\n")
        return exc.returncode
    except SystemExit as exc:
        return exc.code or 0
    return 0


if __name__ == "__main__":
    sys.exit(main())

from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

from apps.experiments.scenario import default_scenario, load_scenario

from cli.common import COMMON, errInfo


def scenario_or_error(config=None, seed=None):
    """Load ``config`` (or the defaults) and turn validation problems into exit code 1."""
    overrides = {} if seed is None else {"seed": str(seed)}
    try:
        if config:
            return load_scenario(config, overrides)
        return default_scenario(**overrides)
    except ValidationError as exc:
        raise CommandError(f"{errInfo(COMMON.INPUT_ERR)}: invalid scenario:\n  " + "\n  ".join(exc.messages), returncode=COMMON.INPUT_ERR)

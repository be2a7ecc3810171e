"""
Access to the ``ASMR`` settings dictionary with packaged defaults.

Project settings override the defaults key by key; the nested ``REVISER``
dictionary is merged the same way.
"""
from django.conf import settings

DEFAULTS = {
    "NUM_FEATURES": 4,
    "THRESHOLD": 0.05,
    "ITERATIONS": 5,
    "SIMULATIONS_PER_CLASS": 10,
    "ACCEPTANCE_POLICY": "always_accept",
    "MAX_POINTS_IN_PROMPT": 200,
    "RESTARTS": 10,
    "WORKERS": 1,
    "SEED": 0,
    "REVISER": {
        "MODE": "llm",
        "ENDPOINT_URL": "http://localhost:8000/v1",
        "MODEL_NAME": "Qwen/Qwen3-32B",
        "TEMPERATURE": 0.6,
        "TOP_P": 0.95,
        "MAX_RETRIES": 2,
        "TIMEOUT": 600.0,
        "RETRY_BACKOFF": 1.0,
        "API_KEY_ENV": "ASMR_API_KEY",
    },
}


class AsmrSettings:
    def __init__(self, defaults=None):
        self.defaults = defaults or DEFAULTS

    @property
    def user_settings(self) -> dict:
        return getattr(settings, "ASMR", {})

    def __getattr__(self, attr):
        if attr not in self.defaults:
            raise AttributeError(f"Invalid ASMR setting: '{attr}'")
        value = self.user_settings.get(attr, self.defaults[attr])
        if isinstance(self.defaults[attr], dict):
            value = {**self.defaults[attr], **value}
        return value


asmr_settings = AsmrSettings()

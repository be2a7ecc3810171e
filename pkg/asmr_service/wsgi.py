"""
WSGI entry point for the asmr_service project (serves the discovery API).
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "asmr_service.settings")

application = get_wsgi_application()

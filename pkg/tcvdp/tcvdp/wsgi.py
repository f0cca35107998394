"""
WSGI config for the tcvdp project.

Only the admin is served over HTTP; it browses the run registry.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tcvdp.settings')

application = get_wsgi_application()

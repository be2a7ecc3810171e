from django.urls import path, include
from rest_framework import routers

from discovery.views import (
    FitViewSet,
    ProgramViewSet,
    PromptViewSet,
    RegretViewSet,
)

router = routers.DefaultRouter()
router.register("programs", ProgramViewSet, basename="program")
router.register("fits", FitViewSet, basename="fit")
router.register("regret", RegretViewSet, basename="regret")
router.register("prompts", PromptViewSet, basename="prompt")


urlpatterns = [path("", include(router.urls))]

app_name = "discovery"

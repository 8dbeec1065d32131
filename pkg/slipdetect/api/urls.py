from django.urls import path
from .views import MetricsView, PredictView, RunListView

urlpatterns = [
    path("predict/", PredictView.as_view(), name="slip-predict"),
    path("metrics/", MetricsView.as_view(), name="slip-metrics"),
    path("runs/", RunListView.as_view(), name="slip-runs"),
]

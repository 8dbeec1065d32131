"""
Slip Detection API Views

Endpoints:
    POST /api/slip/predict/ - Slip/stable prediction for one window
    POST /api/slip/metrics/ - Accuracy, precision, recall and F1 from confusion counts
    GET  /api/slip/runs/    - Recorded training runs with their evaluations
"""

from django.conf import settings as _settings
from drf_yasg import openapi
from drf_yasg.utils import swagger_auto_schema
from rest_framework import status
from rest_framework.permissions import AllowAny, IsAuthenticated
from rest_framework.response import Response
from rest_framework.views import APIView
from rest_framework_simplejwt.authentication import JWTAuthentication

from slipdetect.api.serializers import (
    ConfusionSerializer,
    TrainingRunSerializer,
    WindowPayloadSerializer,
)
from slipdetect.exceptions import SlipDetectError
from slipdetect.models import TrainingRun
from slipdetect.services import MetricsService, PredictionService

RUN_LIST_LIMIT = 50


class BaseSlipView(APIView):
    """
    Base view with common authentication settings.

    Note: Set SLIPNET_API_OPEN=false in production.
    """

    authentication_classes = [JWTAuthentication]
    permission_classes = [AllowAny] if getattr(_settings, "SLIPNET_API_OPEN", True) else [IsAuthenticated]


class PredictView(BaseSlipView):
    """
    Classify one window as slip (0) or stable (1).

    POST /api/slip/predict/

    The window length must equal the checkpoint's sequence length and the
    modalities it needs must be present.

    Returns:
        {label, label_name, confidence, logits}
    """

    @swagger_auto_schema(
        operation_description="Predict slip/stable for one window with a saved checkpoint",
        request_body=WindowPayloadSerializer,
        responses={200: "{label, label_name, confidence, logits}", 400: "{error: {code, message, ...}}"},
    )
    def post(self, request):
        serializer = WindowPayloadSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data

        try:
            window = PredictionService.window_from_arrays(
                tactile=data.get("tactile"), visual=data.get("visual"), forces=data["forces"]
            )
            prediction = PredictionService.predict(data["checkpoint"], window)
        except SlipDetectError as exc:
            return Response({"error": exc.as_dict()}, status=status.HTTP_400_BAD_REQUEST)
        return Response(prediction.to_dict(), status=status.HTTP_200_OK)


class MetricsView(BaseSlipView):
    """
    Metrics from confusion counts (positive class: stable).

    POST /api/slip/metrics/

    Returns:
        {accuracy, precision, recall, f1, undefined}
    """

    @swagger_auto_schema(
        operation_description="Accuracy, precision, recall and F1 from tp/tn/fp/fn (cached 15 minutes)",
        request_body=ConfusionSerializer,
        responses={200: "{accuracy, precision, recall, f1, undefined}"},
    )
    def post(self, request):
        serializer = ConfusionSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)

        try:
            data = MetricsService.from_counts(**serializer.validated_data)
        except SlipDetectError as exc:
            return Response({"error": exc.as_dict()}, status=status.HTTP_400_BAD_REQUEST)
        return Response(data, status=status.HTTP_200_OK)


class RunListView(BaseSlipView):
    """
    Most recent recorded runs, newest first.

    GET /api/slip/runs/?preset=...&variant=...
    """

    @swagger_auto_schema(
        operation_description=f"Recorded training runs (at most {RUN_LIST_LIMIT}), newest first",
        manual_parameters=[
            openapi.Parameter("preset", openapi.IN_QUERY, type=openapi.TYPE_STRING),
            openapi.Parameter("variant", openapi.IN_QUERY, type=openapi.TYPE_STRING),
        ],
        responses={200: TrainingRunSerializer(many=True)},
    )
    def get(self, request):
        runs = TrainingRun.objects.prefetch_related("evaluations").order_by("-created_at", "-id")
        for field in ("preset", "variant"):
            value = request.query_params.get(field)
            if value:
                runs = runs.filter(**{field: value})
        return Response(TrainingRunSerializer(runs[:RUN_LIST_LIMIT], many=True).data, status=status.HTTP_200_OK)

from .base import RenderedImage, Renderer, RenderRequest
from .field import (
    BoxPrimitive,
    GridPrimitive,
    ParseError,
    RadianceField,
    SceneError,
    SpherePrimitive,
    ValidationError,
    load_scene,
)
from .pattern import TestPatternRenderer, render_test_pattern
from .raymarch import RaymarchRenderer, ray_box_spans, render_view, transmittance

__all__ = [
    "BoxPrimitive",
    "GridPrimitive",
    "ParseError",
    "RadianceField",
    "RaymarchRenderer",
    "RenderRequest",
    "RenderedImage",
    "Renderer",
    "SceneError",
    "SpherePrimitive",
    "TestPatternRenderer",
    "ValidationError",
    "load_scene",
    "ray_box_spans",
    "render_test_pattern",
    "render_view",
    "transmittance",
]

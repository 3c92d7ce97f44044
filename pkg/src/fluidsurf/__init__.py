"""Surface finite elements for two-phase fluid deformable surfaces."""

__version__ = "0.1.0"

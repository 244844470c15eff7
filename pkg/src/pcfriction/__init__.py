"""Manning's n from 3D point clouds.

Flume reduction, corpus augmentation, a numpy PointNet-style regressor,
tiled inference and cross-section roughness compounding.
"""
__version__ = "0.1.0"

from .errors import PCFrictionError
from .pointcloud import PointCloud, normalize_zero_origin, tile_cloud

__all__ = ["PCFrictionError", "PointCloud", "normalize_zero_origin", "tile_cloud", "__version__"]

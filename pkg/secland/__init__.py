"""
SecLand - secondary landmark learning from multiview geometry
Shared 3D representation learning, self-supervised detection and a synthetic capture simulator
"""

__version__ = "1.0.0"
__description__ = "Self-supervised secondary landmark learning from multiview geometry"

SCHEMA_VERSION = 1

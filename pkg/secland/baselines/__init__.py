"""
Baseline imputation methods for SecLand
Each method completes secondary landmarks from primary landmarks over flattened pose vectors
"""

from .base import BaseMethod
from .als import AlsConfig, AlsMethod, BalsMethod
from .vae import VaeConfig, VaeMethod, vae_impute

# Method registry
METHODS = {
    'als': AlsMethod,
    'bals': BalsMethod,
    'vae': VaeMethod,
}

# Config section read by each method
CONFIG_SECTIONS = {
    'als': 'als',
    'bals': 'als',
    'vae': 'vae',
}


def get_method(method_name: str):
    """Get method class by name"""
    return METHODS.get(method_name.lower())


def list_methods():
    """List available methods"""
    return list(METHODS.keys())

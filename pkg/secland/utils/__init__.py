"""
Utility functions and classes for SecLand
"""

"""
Core functionality for SecLand
Contains the subspace analysis, landmark detector, 3D predictor, losses and training engine
"""

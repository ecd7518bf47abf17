"""Stochastic approximation proximal gradient estimation of regularisation parameters"""

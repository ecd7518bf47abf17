"""Proximal operators and projections"""

"""Brute-force references for low-dimensional problems"""

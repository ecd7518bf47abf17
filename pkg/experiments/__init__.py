"""Experiment presets, problem builders and the command layer"""

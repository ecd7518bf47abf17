"""Run directories and artifact files"""

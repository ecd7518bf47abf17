"""MYULA Markov kernels and chain diagnostics"""

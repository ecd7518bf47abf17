"""Forward operators, wavelets, noise synthesis, metrics and image I/O"""

"""Domain types, likelihoods and regularisers"""

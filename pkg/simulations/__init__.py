"""
Replication scripts
"""

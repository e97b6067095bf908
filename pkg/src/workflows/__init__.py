"""Workflows module"""
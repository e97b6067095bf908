"""Core module"""
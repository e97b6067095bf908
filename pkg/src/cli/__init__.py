"""Command line module"""
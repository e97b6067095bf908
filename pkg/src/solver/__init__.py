"""Delta-decision procedure"""
"""A-Normal Featherweight Java front end and analyses."""

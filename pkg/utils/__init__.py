# Init file
    def deny_unauthorized_access(action: str, user_role: str, required_role: str):
    """
    Denies unauthorized access to specific actions based on user's role.
    Parameters:
    - action (str): The action to be performed (e.g., 'createProject', 'updateTask')
    - user_role (str): Current user's role (e.g., 'Admin', 'Regular User')
    """
    if user_role != required_role:
        raise PermissionError(f"Unauthorized access denied. Action '{action}' requires {required_role} role.")

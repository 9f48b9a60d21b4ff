    def check_permission(user_role, action, resource_type, resource_id=None):
    """
    Check if the user with the given role has permission to perform the specified action on the resource.

    Parameters:
    - user_role (str): The role of the user (e.g., 'Admin', 'Regular User')
    - action (str): The action to be performed (e.g., 'createProject', 'updateTask')
    - resource_type (str): The type of resource (e.g., 'project', 'task')
    - resource_id (int, optional): The ID of the resource, if applicable

    Returns:
    - bool: True if the user has permission, False otherwise
    """
    # Define a dictionary mapping roles to allowed actions for each resource type
    # This is a simplified example, in a real-world scenario, you would likely fetch these permissions from a database or config file
    allowed_permissions = {
        'project': {
            'Admin': ['createProject', 'updateProject', 'deleteProject', 'listProjects'],
            'Regular User': ['viewProjectProgress']
        },
        'task': {
            'Admin': ['createTask', 'updateTask', 'assignTask', 'trackTaskProgress'],
            'Regular User': ['assignTask', 'viewTaskProgress']
        }
    }

    if user_role not in allowed_permissions[resource_type]:
        return False

    if action not in allowed_permissions[resource_type][user_role]:
        return False

    # If resource_id is required and not provided, deny access
    if resource_id is not None and resource_id < 1:
        return False

    return True

def handle_login(request):
    token = validate_token(request.token)
    if token.expired:
        raise AuthError("token expired")
    return create_session(token.user)

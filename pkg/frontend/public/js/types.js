// Shapes of the experiment service's JSON API.
export {};
